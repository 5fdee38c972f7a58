#pragma once

#include "tilq/bsde.hpp"
#include "tilq/config.hpp"
#include "tilq/errors.hpp"
#include "tilq/io.hpp"
#include "tilq/meanvar.hpp"
#include "tilq/model.hpp"
#include "tilq/numerics.hpp"
#include "tilq/riccati.hpp"
#include "tilq/simulate.hpp"
#include "tilq/time_grid.hpp"
#include "tilq/verification.hpp"
