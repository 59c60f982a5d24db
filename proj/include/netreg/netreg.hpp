#pragma once

#include "netreg/error.hpp"
#include "netreg/netdata.hpp"
#include "netreg/kernels.hpp"
#include "netreg/codegree.hpp"
#include "netreg/estimators.hpp"
#include "netreg/normal.hpp"
#include "netreg/inference.hpp"
#include "netreg/peerfx.hpp"
#include "netreg/simlab.hpp"
