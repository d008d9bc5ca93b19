#pragma once

#include "advdyn/error.hpp"
#include "advdyn/rng.hpp"
#include "advdyn/model.hpp"
#include "advdyn/geometry.hpp"
#include "advdyn/loss.hpp"
#include "advdyn/constrained.hpp"
#include "advdyn/csv.hpp"
#include "advdyn/parallel.hpp"
#include "advdyn/pgd.hpp"
#include "advdyn/landscape.hpp"
#include "advdyn/data.hpp"
#include "advdyn/train.hpp"
#include "advdyn/experiments.hpp"
#include "advdyn/manifest.hpp"
#include "advdyn/commands.hpp"
