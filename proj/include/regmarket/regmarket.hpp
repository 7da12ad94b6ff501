/*
 * Copyright 2026 The regmarket Authors.
 *
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


#ifndef REGMARKET_REGMARKET_HPP_
#define REGMARKET_REGMARKET_HPP_

// Everything in one include.

#include "regmarket/error.hpp"
#include "regmarket/rng.hpp"
#include "regmarket/timeseries_data.hpp"
#include "regmarket/loss_functions.hpp"
#include "regmarket/batch_estimator.hpp"
#include "regmarket/online_estimator.hpp"
#include "regmarket/allocation_policies.hpp"
#include "regmarket/market_engine.hpp"
#include "regmarket/simulation_lab.hpp"
#include "regmarket/report_io.hpp"
#include "regmarket/run_config.hpp"
#include "regmarket/cli_reporting.hpp"

#endif  // REGMARKET_REGMARKET_HPP_
