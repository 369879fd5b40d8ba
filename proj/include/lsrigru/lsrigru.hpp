#pragma once

#include "lsrigru/backtest.hpp"
#include "lsrigru/checkpoint.hpp"
#include "lsrigru/config.hpp"
#include "lsrigru/dataset.hpp"
#include "lsrigru/gat.hpp"
#include "lsrigru/igru.hpp"
#include "lsrigru/marketdata.hpp"
#include "lsrigru/model.hpp"
#include "lsrigru/pipeline.hpp"
#include "lsrigru/relgraph.hpp"
#include "lsrigru/synth.hpp"
#include "lsrigru/train.hpp"
