// Copyright 2026 The divfact Authors. All Rights Reserved.
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

// Umbrella header (everything except the JSON/CSV layer in io.hpp).

#pragma once

#include "divfact/altmin.hpp"
#include "divfact/divergence.hpp"
#include "divfact/errors.hpp"
#include "divfact/harness.hpp"
#include "divfact/lifted.hpp"
#include "divfact/matops.hpp"
#include "divfact/model.hpp"
#include "divfact/random.hpp"
#include "divfact/version.hpp"
