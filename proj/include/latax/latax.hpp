#pragma once

#include "latax/error.hpp"
#include "latax/rng.hpp"
#include "latax/linalg.hpp"
#include "latax/image.hpp"
#include "latax/dataset.hpp"
#include "latax/toyworld.hpp"
#include "latax/axes.hpp"
#include "latax/editing.hpp"
#include "latax/metrics.hpp"
#include "latax/losses.hpp"
#include "latax/trainer.hpp"
#include "latax/io.hpp"
