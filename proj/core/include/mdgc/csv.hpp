#pragma once

#include <string>

#include "mdgc/conv.hpp"
#include "mdgc/network.hpp"

namespace mdgc {

// Labeled dataset, one sample per row: split_flag,label,x[0],x[1],...
// Values are vertex-major: channel c of vertex v sits at column v*channels+c.
// channels <= 0 derives the channel count from the first row's width.
Dataset read_dataset_csv(const std::string& path, int nv, int channels = 0);
void write_dataset_csv(const Dataset& data, const std::string& path);

// Per-vertex signal, one vertex per row, one channel per column.
Signal read_signal_csv(const std::string& path);
void write_signal_csv(const Signal& s, const std::string& path);

} // namespace mdgc
