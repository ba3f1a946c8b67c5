#ifndef RISV_RISV_HPP
#define RISV_RISV_HPP

// Numerical core. config.hpp, io.hpp and cli.hpp additionally need json.hpp on the include path.

#include "control.hpp"
#include "discretization.hpp"
#include "dissipation.hpp"
#include "energy.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "parametrization.hpp"
#include "paths.hpp"
#include "state_solver.hpp"
#include "tridiagonal.hpp"

#endif // RISV_RISV_HPP
