// SPDX-License-Identifier: Apache-2.0
//
// Frame construction and round-robin device-model scheduling. A frame is M
// consecutive communication rounds sharing one random equal partition of the
// K devices into M groups; within the frame the group-to-model map rotates so
// every group trains every model exactly once.
#pragma once

#include <vector>

#include "mmfl/rng.hpp"

namespace mmfl {

/// Group-to-model rotation. Group and model indices are 1-based; rounds are
/// 0-based. Inverse of group_training_model.
int assigned_model(int group_i, int round_t, int num_models);

/// The unique group training model m in round t.
int group_training_model(int model_m, int round_t, int num_models);

/// One frame's device grouping. Device indices are 0-based, group and model
/// indices 1-based.
struct Schedule {
  int frame_index = 0;
  int num_devices = 0;                   // K
  int num_models = 0;                    // M (== number of groups)
  std::vector<std::vector<int>> groups;  // [i-1] -> sorted device ids, K/M each

  int group_size() const { return num_devices / num_models; }
  const std::vector<int>& group(int group_i) const {
    return groups[static_cast<std::size_t>(group_i - 1)];
  }
  /// 1-based group of a 0-based device id.
  int group_of(int device) const;
  int assigned_model(int group_i, int round_t) const {
    return mmfl::assigned_model(group_i, round_t, num_models);
  }
  int group_training_model(int model_m, int round_t) const {
    return mmfl::group_training_model(model_m, round_t, num_models);
  }
};

/// Uniform random equal partition of K devices into M groups, fixed for one
/// frame. Throws ConfigError when M does not divide K.
Schedule partition_devices(int num_devices, int num_models, Rng& rng,
                           int frame_index = 0);

}  // namespace mmfl
