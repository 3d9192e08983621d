#pragma once

#include "ncutseg/error.hpp"
#include "ncutseg/graph.hpp"
#include "ncutseg/io.hpp"
#include "ncutseg/metrics.hpp"
#include "ncutseg/partition.hpp"
#include "ncutseg/pipeline.hpp"
#include "ncutseg/refine.hpp"
#include "ncutseg/spectral.hpp"
#include "ncutseg/types.hpp"
