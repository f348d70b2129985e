#pragma once

#include "fracdim/config.hpp"
#include "fracdim/ergodic.hpp"
#include "fracdim/error.hpp"
#include "fracdim/geometry.hpp"
#include "fracdim/linalg.hpp"
#include "fracdim/measure.hpp"
#include "fracdim/pressure.hpp"
#include "fracdim/shift.hpp"
#include "fracdim/svf.hpp"
#include "fracdim/systems.hpp"
