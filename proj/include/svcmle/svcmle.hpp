#pragma once

#include "common.hpp"
#include "covariance.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "response_covariance.hpp"
#include "likelihood.hpp"
#include "optimizer.hpp"
#include "prediction.hpp"
#include "simulation.hpp"
#include "io.hpp"
