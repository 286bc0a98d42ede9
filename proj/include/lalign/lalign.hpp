#pragma once

// Umbrella header for the latent-space alignment toolkit.

#include "lalign/core/error.hpp"
#include "lalign/core/expm.hpp"
#include "lalign/core/kde.hpp"
#include "lalign/core/matrix.hpp"
#include "lalign/core/rng.hpp"
#include "lalign/core/svd.hpp"
#include "lalign/eval/backfill.hpp"
#include "lalign/eval/retrieval.hpp"
#include "lalign/io/bundle.hpp"
#include "lalign/io/synth.hpp"
#include "lalign/losses/losses.hpp"
#include "lalign/maps/maps.hpp"
#include "lalign/train/adam.hpp"
#include "lalign/train/trainer.hpp"
