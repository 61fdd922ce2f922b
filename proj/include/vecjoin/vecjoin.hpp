#pragma once

#include "vecjoin/core.hpp"
#include "vecjoin/cost.hpp"
#include "vecjoin/embed.hpp"
#include "vecjoin/grid.hpp"
#include "vecjoin/index.hpp"
#include "vecjoin/io.hpp"
#include "vecjoin/partition.hpp"
#include "vecjoin/pca.hpp"
#include "vecjoin/pivots.hpp"
#include "vecjoin/verify.hpp"
