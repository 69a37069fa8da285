// Copyright 2026 The pspc Authors.
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


// Umbrella header (everything except the HTTP front end).

#pragma once

#include "pspc/aggregate.hpp"
#include "pspc/core.hpp"
#include "pspc/correlation.hpp"
#include "pspc/data.hpp"
#include "pspc/error.hpp"
#include "pspc/eval.hpp"
#include "pspc/labeling.hpp"
#include "pspc/models/gbdt.hpp"
#include "pspc/models/kernel_ridge.hpp"
#include "pspc/models/training.hpp"
#include "pspc/pipeline.hpp"
#include "pspc/random.hpp"
#include "pspc/serialize.hpp"
#include "pspc/service.hpp"
