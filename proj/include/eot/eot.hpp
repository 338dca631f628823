#pragma once

#include "eot/barycenter.hpp"
#include "eot/cost.hpp"
#include "eot/riccati.hpp"
#include "eot/sinkhorn.hpp"
#include "eot/spd.hpp"
