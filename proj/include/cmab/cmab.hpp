#pragma once

#include "cmab/algorithms.hpp"
#include "cmab/config.hpp"
#include "cmab/core.hpp"
#include "cmab/environments.hpp"
#include "cmab/error.hpp"
#include "cmab/estimation.hpp"
#include "cmab/harness.hpp"
#include "cmab/lp.hpp"
#include "cmab/omd.hpp"
#include "cmab/verify.hpp"
