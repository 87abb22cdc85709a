#pragma once

#include "pos2fs/common.hpp"
#include "pos2fs/stream_data.hpp"
#include "pos2fs/lfa.hpp"
#include "pos2fs/classifiers.hpp"
#include "pos2fs/swarm.hpp"
#include "pos2fs/stats.hpp"
#include "pos2fs/three_way.hpp"
#include "pos2fs/pipeline.hpp"
#include "pos2fs/report.hpp"
#include "pos2fs/experiment.hpp"
