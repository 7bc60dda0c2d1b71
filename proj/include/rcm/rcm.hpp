#pragma once

#include "rcm/error.hpp"
#include "rcm/rng.hpp"
#include "rcm/space.hpp"
#include "rcm/stats.hpp"
#include "rcm/marks.hpp"
#include "rcm/model.hpp"
#include "rcm/grid_index.hpp"
#include "rcm/parallel.hpp"
#include "rcm/explorer.hpp"
#include "rcm/kernels.hpp"
#include "rcm/box.hpp"
#include "rcm/branching.hpp"
#include "rcm/io/config.hpp"
#include "rcm/io/csv.hpp"
#include "rcm/app/commands.hpp"
