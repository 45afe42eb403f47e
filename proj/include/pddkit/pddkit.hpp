#pragma once

#include "pddkit/cif.hpp"
#include "pddkit/elements.hpp"
#include "pddkit/error.hpp"
#include "pddkit/geometry.hpp"
#include "pddkit/io.hpp"
#include "pddkit/mds.hpp"
#include "pddkit/metric.hpp"
#include "pddkit/parallel.hpp"
#include "pddkit/pdd.hpp"
#include "pddkit/pst.hpp"
#include "pddkit/rng.hpp"
#include "pddkit/train.hpp"
