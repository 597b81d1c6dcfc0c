// SPDX-License-Identifier: Apache-2.0
#include "mmfl/scheduler.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "mmfl/errors.hpp"

namespace mmfl {

int assigned_model(int group_i, int round_t, int num_models) {
  const int m = num_models;
  return (m + group_i - (round_t % m) - 1) % m + 1;
}

int group_training_model(int model_m, int round_t, int num_models) {
  // assigned_model(i, t) = ((i - 1 - t) mod M) + 1, so invert for i.
  const int m = num_models;
  return (model_m - 1 + round_t % m) % m + 1;
}

int Schedule::group_of(int device) const {
  for (int i = 0; i < num_models; ++i) {
    const auto& g = groups[static_cast<std::size_t>(i)];
    if (std::binary_search(g.begin(), g.end(), device)) return i + 1;
  }
  return 0;
}

Schedule partition_devices(int num_devices, int num_models, Rng& rng,
                           int frame_index) {
  if (num_models < 1 || num_devices < 1) {
    throw ConfigError("partition_devices: K and M must be positive");
  }
  if (num_devices % num_models != 0) {
    throw ConfigError("partition_devices: K=" + std::to_string(num_devices) +
                      " is not divisible by M=" + std::to_string(num_models));
  }
  std::vector<int> order(static_cast<std::size_t>(num_devices));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  Schedule s;
  s.frame_index = frame_index;
  s.num_devices = num_devices;
  s.num_models = num_models;
  const int size = num_devices / num_models;
  s.groups.resize(static_cast<std::size_t>(num_models));
  for (int i = 0; i < num_models; ++i) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(i) * size;
    s.groups[static_cast<std::size_t>(i)].assign(first, first + size);
    std::sort(s.groups[static_cast<std::size_t>(i)].begin(),
              s.groups[static_cast<std::size_t>(i)].end());
  }
  return s;
}

}  // namespace mmfl
