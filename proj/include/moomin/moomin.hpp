/*
 * Copyright 2026 The MOOMIN Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "moomin/contextualizer.hpp"
#include "moomin/dataio.hpp"
#include "moomin/diagnostics.hpp"
#include "moomin/encoders.hpp"
#include "moomin/error.hpp"
#include "moomin/graph.hpp"
#include "moomin/metrics.hpp"
#include "moomin/molgraph.hpp"
#include "moomin/rng.hpp"
#include "moomin/synergy_model.hpp"
#include "moomin/synth.hpp"
#include "moomin/tensor.hpp"
#include "moomin/trainer.hpp"
