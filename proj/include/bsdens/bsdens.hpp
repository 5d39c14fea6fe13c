#pragma once

// Every public header of the library, including the configuration runner.

#include "bsdens/cli/config.hpp"
#include "bsdens/cli/runner.hpp"
#include "bsdens/criteria/checks.hpp"
#include "bsdens/criteria/core.hpp"
#include "bsdens/criteria/report.hpp"
#include "bsdens/density/bouleau_hirsch.hpp"
#include "bsdens/density/gfunction.hpp"
#include "bsdens/density/samplers.hpp"
#include "bsdens/mc/bsde.hpp"
#include "bsdens/mc/io.hpp"
#include "bsdens/mc/malliavin.hpp"
#include "bsdens/mc/paths.hpp"
#include "bsdens/model/assumptions.hpp"
#include "bsdens/model/expression.hpp"
#include "bsdens/model/presets.hpp"
#include "bsdens/model/spec.hpp"
#include "bsdens/numerics/basis.hpp"
#include "bsdens/numerics/parallel.hpp"
#include "bsdens/numerics/quadrature.hpp"
#include "bsdens/numerics/regression.hpp"
#include "bsdens/numerics/rng.hpp"
#include "bsdens/numerics/special.hpp"
#include "bsdens/numerics/spline.hpp"
#include "bsdens/numerics/stats.hpp"
#include "bsdens/numerics/tridiagonal.hpp"
#include "bsdens/pde/grid.hpp"
#include "bsdens/pde/io.hpp"
#include "bsdens/pde/solver.hpp"
#include "bsdens/tails/envelope.hpp"
#include "bsdens/tails/growth.hpp"
#include "bsdens/tails/pipeline.hpp"
#include "bsdens/tails/sandwich.hpp"
