// Umbrella header for the whole library.
#pragma once

#include "nnod/ad.hpp"
#include "nnod/bifurcation.hpp"
#include "nnod/dense.hpp"
#include "nnod/dyn_game.hpp"
#include "nnod/ilq.hpp"
#include "nnod/inverse_game.hpp"
#include "nnod/jet.hpp"
#include "nnod/lq_game.hpp"
#include "nnod/math.hpp"
#include "nnod/mlp.hpp"
#include "nnod/neural_nod.hpp"
#include "nnod/nod_json.hpp"
#include "nnod/opinion.hpp"
#include "nnod/parallel.hpp"
#include "nnod/race.hpp"
#include "nnod/rng.hpp"
#include "nnod/track.hpp"
