#pragma once

// Umbrella header.

#include "nnfuse/attribution.hpp"
#include "nnfuse/bitvector.hpp"
#include "nnfuse/datagen.hpp"
#include "nnfuse/dataset.hpp"
#include "nnfuse/error.hpp"
#include "nnfuse/evaluation.hpp"
#include "nnfuse/ingest.hpp"
#include "nnfuse/io.hpp"
#include "nnfuse/matching.hpp"
#include "nnfuse/parallel.hpp"
#include "nnfuse/rng.hpp"
#include "nnfuse/schema.hpp"
#include "nnfuse/synthesis.hpp"

namespace nnfuse {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nnfuse
