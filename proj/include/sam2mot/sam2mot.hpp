#pragma once

#include "sam2mot/assignment.hpp"
#include "sam2mot/backend.hpp"
#include "sam2mot/engine.hpp"
#include "sam2mot/error.hpp"
#include "sam2mot/interaction.hpp"
#include "sam2mot/io.hpp"
#include "sam2mot/mask.hpp"
#include "sam2mot/metrics.hpp"
#include "sam2mot/scenarios.hpp"
#include "sam2mot/synthetic.hpp"
#include "sam2mot/trajectory.hpp"
