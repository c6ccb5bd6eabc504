// Copyright 2026 The enkiabc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ENKIABC_ENSEMBLE_HPP
#define ENKIABC_ENSEMBLE_HPP

#include <optional>
#include <utility>

#include "enkiabc/gaussian.hpp"

namespace enkiabc {

/**
 * M ensemble members (columns) together with their cached moments.
 *
 * Images h^j = H x^j use an optional linear observation operator H; without
 * one the images are the members themselves, which is the ABC setting where
 * state and observation spaces coincide.
 */
struct Ensemble {
  Matrix members;
  std::optional<Matrix> observation;
  EnsembleMoments moments;
  int iteration = 0;

  static Ensemble from_members(Matrix members, std::optional<Matrix> observation = std::nullopt, int iteration = 0) {
    Ensemble e;
    e.members = std::move(members);
    e.observation = std::move(observation);
    if (e.observation && e.observation->cols() != e.members.rows()) {
      throw DimensionError("Ensemble: observation operator does not match the state dimension");
    }
    e.iteration = iteration;
    e.refresh();
    return e;
  }

  Index size() const noexcept { return members.cols(); }
  Index dim() const noexcept { return members.rows(); }
  Index obs_dim() const noexcept { return observation ? observation->rows() : members.rows(); }
  bool identity_observation() const noexcept { return !observation.has_value(); }

  Matrix images() const { return observation ? Matrix(*observation * members) : members; }

  void refresh() {
    moments = observation ? ensemble_moments(members, Matrix(*observation * members)) : ensemble_moments(members);
  }
};

}  // namespace enkiabc

#endif
