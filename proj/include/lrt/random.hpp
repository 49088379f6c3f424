#pragma once

// Seeded random operators for property tests and self-checks.

#include <cstdint>
#include <random>

#include "lrt/types.hpp"

namespace lrt::random {

using Engine = std::mt19937_64;

Operator ginibre(Index n, Engine& rng);
Operator hermitian(Index n, Engine& rng);
// Haar distributed (QR of a Ginibre matrix with phase correction).
Operator unitary(Index n, Engine& rng);
Operator projection(Index n, Index rank, Engine& rng);
double uniform(Engine& rng, double lo, double hi);

}  // namespace lrt::random
