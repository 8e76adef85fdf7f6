#pragma once

#include "agdet/core.hpp"
#include "agdet/error.hpp"
#include "agdet/eval.hpp"
#include "agdet/io.hpp"
#include "agdet/matrix.hpp"
#include "agdet/nncore.hpp"
#include "agdet/noise.hpp"
#include "agdet/qdagg.hpp"
#include "agdet/random.hpp"
#include "agdet/sampling.hpp"
#include "agdet/synthgen.hpp"
