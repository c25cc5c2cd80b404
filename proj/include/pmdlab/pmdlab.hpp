#pragma once

// Everything except io.hpp, which additionally needs nlohmann/json on the include path.

#include "pmdlab/contraction.hpp"
#include "pmdlab/dist.hpp"
#include "pmdlab/error.hpp"
#include "pmdlab/lambertw.hpp"
#include "pmdlab/numeric.hpp"
#include "pmdlab/parallel.hpp"
#include "pmdlab/rng.hpp"
#include "pmdlab/sampling.hpp"
#include "pmdlab/solvers.hpp"
#include "pmdlab/trainer.hpp"
