#pragma once

#include "geoadcs/actuators.hpp"
#include "geoadcs/control.hpp"
#include "geoadcs/estimation.hpp"
#include "geoadcs/geomag.hpp"
#include "geoadcs/math.hpp"
#include "geoadcs/orbit.hpp"
#include "geoadcs/random.hpp"
#include "geoadcs/scenario.hpp"
#include "geoadcs/sensors.hpp"
#include "geoadcs/telemetry.hpp"
#include "geoadcs/vehicle.hpp"
