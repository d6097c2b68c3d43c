#pragma once

#include "retrofit/classify.hpp"
#include "retrofit/errors.hpp"
#include "retrofit/json_io.hpp"
#include "retrofit/linalg.hpp"
#include "retrofit/pipeline.hpp"
#include "retrofit/problem.hpp"
#include "retrofit/rates.hpp"
#include "retrofit/redesign.hpp"
#include "retrofit/scenarios.hpp"
#include "retrofit/simulate.hpp"
#include "retrofit/system.hpp"
#include "retrofit/tolerances.hpp"
#include "retrofit/trajectory.hpp"
