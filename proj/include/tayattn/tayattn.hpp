#pragma once

// Umbrella header.

#include "tayattn/bench.hpp"
#include "tayattn/config.hpp"
#include "tayattn/error.hpp"
#include "tayattn/feature_map.hpp"
#include "tayattn/grad.hpp"
#include "tayattn/io.hpp"
#include "tayattn/kron.hpp"
#include "tayattn/normalize.hpp"
#include "tayattn/recurrent.hpp"
#include "tayattn/reference.hpp"
#include "tayattn/rng.hpp"
#include "tayattn/tensor.hpp"
#include "tayattn/verify.hpp"
