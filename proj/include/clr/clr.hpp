#pragma once

// Umbrella header: the whole library in one include.

#include "clr/adapter.hpp"
#include "clr/arch.hpp"
#include "clr/backbone.hpp"
#include "clr/checkpoint.hpp"
#include "clr/cli.hpp"
#include "clr/config.hpp"
#include "clr/continual.hpp"
#include "clr/dataset.hpp"
#include "clr/errors.hpp"
#include "clr/gradcheck.hpp"
#include "clr/graph.hpp"
#include "clr/ledger.hpp"
#include "clr/ops.hpp"
#include "clr/report.hpp"
#include "clr/rng.hpp"
#include "clr/sgd.hpp"
#include "clr/synth.hpp"
#include "clr/tasks.hpp"
#include "clr/tensor.hpp"
