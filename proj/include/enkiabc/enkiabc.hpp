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

#ifndef ENKIABC_ENKIABC_HPP
#define ENKIABC_ENKIABC_HPP

#include "enkiabc/abc.hpp"
#include "enkiabc/csv.hpp"
#include "enkiabc/ensemble.hpp"
#include "enkiabc/errors.hpp"
#include "enkiabc/estimate.hpp"
#include "enkiabc/estimators.hpp"
#include "enkiabc/filters.hpp"
#include "enkiabc/gaussian.hpp"
#include "enkiabc/ienki.hpp"
#include "enkiabc/mcmc.hpp"
#include "enkiabc/normality.hpp"
#include "enkiabc/rng.hpp"
#include "enkiabc/simulators.hpp"
#include "enkiabc/tempering.hpp"

#endif
