#pragma once

// Umbrella header.
#include "stiffnet/batchmeans.hpp"
#include "stiffnet/error.hpp"
#include "stiffnet/fast_class.hpp"
#include "stiffnet/io.hpp"
#include "stiffnet/likelihood.hpp"
#include "stiffnet/network.hpp"
#include "stiffnet/observable.hpp"
#include "stiffnet/oracle.hpp"
#include "stiffnet/parallel.hpp"
#include "stiffnet/rng.hpp"
#include "stiffnet/ssa.hpp"
#include "stiffnet/state_space.hpp"
#include "stiffnet/twoscale.hpp"
