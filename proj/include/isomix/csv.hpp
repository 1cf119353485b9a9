#pragma once

#include "isomix/core.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace isomix {

// Reads `time,status,q1[,q2,...,qK]`. A lone q1 column means K=2 with
// q2 = 1 - q1. Lines starting with '#' and blank lines are skipped.
std::vector<Observation> read_observations_csv(std::istream& in);
MixtureSample read_sample_csv(std::istream& in);
MixtureSample read_sample_csv_file(const std::string& path);

// Writes every mixture column with round-trip precision.
void write_sample_csv(std::ostream& out, const MixtureSample& sample);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace isomix
