#pragma once

#include "partial_loading/errors.hpp"
#include "partial_loading/model_library.hpp"
#include "partial_loading/radio.hpp"
#include "partial_loading/latency.hpp"
#include "partial_loading/scenario.hpp"
#include "partial_loading/instance.hpp"
#include "partial_loading/schedule.hpp"
#include "partial_loading/oracle.hpp"
#include "partial_loading/dp_scheduler.hpp"
#include "partial_loading/greedy_scheduler.hpp"
#include "partial_loading/harness.hpp"
#include "partial_loading/io.hpp"
