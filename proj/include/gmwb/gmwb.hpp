#pragma once

#include "gmwb/contract.hpp"
#include "gmwb/errors.hpp"
#include "gmwb/fee.hpp"
#include "gmwb/gpr.hpp"
#include "gmwb/hpde.hpp"
#include "gmwb/io.hpp"
#include "gmwb/lattice.hpp"
#include "gmwb/mc.hpp"
#include "gmwb/model.hpp"
#include "gmwb/parallel.hpp"
#include "gmwb/qmc.hpp"
