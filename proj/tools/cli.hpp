#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace crossmom::cli {

/// Runs one command line (without the program name). Returns the exit code:
/// 0 success, 1 I/O or parse error, 2 identifiability, 3 bad flags.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Line-aligned byte ranges [begin, end) covering the data lines of a CSV.
struct ByteRange {
    std::uint64_t begin = 0;
    std::uint64_t end = 0;
};

std::vector<ByteRange> plan_shards(const std::string& path, unsigned shards);

/// Worker threads for k shards: k capped by CM_THREADS when set.
unsigned worker_count(unsigned shards);

}  // namespace crossmom::cli
