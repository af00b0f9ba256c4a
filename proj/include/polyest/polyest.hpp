#pragma once

#include <polyest/changepoint.hpp>
#include <polyest/distributions.hpp>
#include <polyest/errors.hpp>
#include <polyest/moments.hpp>
#include <polyest/pmm.hpp>
#include <polyest/regression.hpp>
#include <polyest/signals.hpp>
#include <polyest/sls.hpp>
#include <polyest/solvers.hpp>
#include <polyest/stochpoly.hpp>
#include <polyest/volterra.hpp>
