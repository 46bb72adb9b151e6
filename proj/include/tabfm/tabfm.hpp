#pragma once

#include "tabfm/cleaning/cleaning.hpp"
#include "tabfm/core/csv.hpp"
#include "tabfm/core/error.hpp"
#include "tabfm/core/rng.hpp"
#include "tabfm/data/split.hpp"
#include "tabfm/data/table.hpp"
#include "tabfm/eval/leaderboard.hpp"
#include "tabfm/eval/metrics.hpp"
#include "tabfm/great/great.hpp"
#include "tabfm/models/synthesizer.hpp"
#include "tabfm/pipeline/commands.hpp"
#include "tabfm/pipeline/config.hpp"
#include "tabfm/training/checkpoint.hpp"
#include "tabfm/training/trainer.hpp"
#include "tabfm/transform/table_transformer.hpp"
#include "tabfm/transform/text.hpp"
