// vbmtl/vbmtl.hpp

// Copyright 2026 The vbmtl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "vbmtl/common.hpp"
#include "vbmtl/autodiff.hpp"
#include "vbmtl/task_schema.hpp"
#include "vbmtl/dataio.hpp"
#include "vbmtl/objectives.hpp"
#include "vbmtl/model.hpp"
#include "vbmtl/optim.hpp"
#include "vbmtl/weighting.hpp"
#include "vbmtl/trainer.hpp"
#include "vbmtl/config.hpp"
#include "vbmtl/harness.hpp"
