#pragma once

#include "popstock/analytics.hpp"
#include "popstock/chart.hpp"
#include "popstock/date.hpp"
#include "popstock/error.hpp"
#include "popstock/event_table.hpp"
#include "popstock/inference.hpp"
#include "popstock/ingest.hpp"
#include "popstock/pipeline.hpp"
#include "popstock/regions.hpp"
#include "popstock/stocks.hpp"
#include "popstock/synth.hpp"
#include "popstock/validation.hpp"
