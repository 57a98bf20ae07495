#pragma once

#include "awsens/error.hpp"
#include "awsens/process_tree.hpp"
#include "awsens/discrete_ot.hpp"
#include "awsens/adapted_wasserstein.hpp"
#include "awsens/cost_models.hpp"
#include "awsens/multistage_opt.hpp"
#include "awsens/optimal_stopping.hpp"
#include "awsens/sensitivity.hpp"
#include "awsens/robust_oracle.hpp"
#include "awsens/io.hpp"
