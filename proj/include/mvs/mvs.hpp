// Copyright 2026 The mvselect Authors
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


// Umbrella header.

#pragma once

#include "mvs/checkpoint.hpp"
#include "mvs/config.hpp"
#include "mvs/demo_store.hpp"
#include "mvs/diffusion.hpp"
#include "mvs/error.hpp"
#include "mvs/image_io.hpp"
#include "mvs/model.hpp"
#include "mvs/mvmae.hpp"
#include "mvs/nn.hpp"
#include "mvs/rng.hpp"
#include "mvs/rollout.hpp"
#include "mvs/scene.hpp"
#include "mvs/selector.hpp"
#include "mvs/trainer.hpp"
