#pragma once

#include "latax/accuracy.hpp"
#include "latax/quality.hpp"
