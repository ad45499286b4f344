#pragma once

#include "sgwpcqa/chebyshev.hpp"
#include "sgwpcqa/correspondence.hpp"
#include "sgwpcqa/error.hpp"
#include "sgwpcqa/eval.hpp"
#include "sgwpcqa/filter_bank.hpp"
#include "sgwpcqa/graph.hpp"
#include "sgwpcqa/kdtree.hpp"
#include "sgwpcqa/metrics.hpp"
#include "sgwpcqa/parallel.hpp"
#include "sgwpcqa/ply.hpp"
#include "sgwpcqa/pointcloud.hpp"
#include "sgwpcqa/sgwt.hpp"
#include "sgwpcqa/stats.hpp"
#include "sgwpcqa/svr.hpp"
