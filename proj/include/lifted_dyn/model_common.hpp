/*
 Copyright 2026 The lifted-dyn Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef LIFTED_DYN_MODEL_COMMON_HPP
#define LIFTED_DYN_MODEL_COMMON_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace lifted_dyn {

/// What a fit did; serialized next to the model parameters.
struct FitDiagnostics {
  std::string method;
  double loss = 0.0;  // training sum of squared lifted residuals
  double initial_loss = 0.0;
  int iterations = 0;
  bool converged = true;
  double solver_tolerance = 0.0;
  /// Transition columns with no data mass, replaced by self-loops.
  std::vector<Eigen::Index> unobserved_columns;
  double condition_number = 0.0;
  double ridge = 0.0;
  bool rank_deficient = false;
  std::vector<std::string> warnings;
};

/// Decoded open-loop prediction.
struct Prediction {
  Eigen::VectorXd times;   // steps + 1
  Eigen::MatrixXd states;  // (steps + 1) x n
};

}  // namespace lifted_dyn

#endif  // LIFTED_DYN_MODEL_COMMON_HPP
