#pragma once

#include "tnt/algorithms/dmrg.hpp"
#include "tnt/algorithms/observables.hpp"
#include "tnt/algorithms/tebd.hpp"
#include "tnt/config.hpp"
#include "tnt/dense_tensor.hpp"
#include "tnt/linalg.hpp"
#include "tnt/mps.hpp"
#include "tnt/network.hpp"
#include "tnt/node.hpp"
#include "tnt/symmetric_tensor.hpp"
