#include "isomix/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace isomix {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_number(const std::string& field, std::size_t row, const char* column) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc() || ptr != last) {
    std::ostringstream os;
    os << "row " << row << ": column '" << column << "' is not a number: '" << field << "'";
    throw InputError(InputError::Code::Parse, os.str(), static_cast<long>(row - 1));
  }
  return value;
}

bool skip_line(const std::string& line) {
  const std::string t = trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace

std::vector<Observation> read_observations_csv(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (skip_line(line)) continue;
    header = split(line);
    break;
  }
  if (header.size() < 3 || header[0] != "time" || header[1] != "status")
    throw InputError(InputError::Code::Parse, "header must be time,status,q1[,q2,...,qK]");
  for (std::size_t c = 2; c < header.size(); ++c) {
    if (header[c] != "q" + std::to_string(c - 1))
      throw InputError(InputError::Code::Parse, "unexpected header column '" + header[c] + "'");
  }
  const std::size_t q_columns = header.size() - 2;

  std::vector<Observation> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (skip_line(line)) continue;
    ++row;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      std::ostringstream os;
      os << "row " << row << ": expected " << header.size() << " fields, found " << fields.size();
      throw InputError(InputError::Code::Parse, os.str(), static_cast<long>(row - 1));
    }
    Observation obs;
    obs.time = parse_number(fields[0], row, "time");
    const double status = parse_number(fields[1], row, "status");
    obs.status = (status == 0.0 || status == 1.0) ? static_cast<int>(status) : -1;
    for (std::size_t c = 0; c < q_columns; ++c)
      obs.mix.push_back(parse_number(fields[c + 2], row, header[c + 2].c_str()));
    if (q_columns == 1) obs.mix.push_back(1.0 - obs.mix[0]);
    rows.push_back(std::move(obs));
  }
  return rows;
}

MixtureSample read_sample_csv(std::istream& in) {
  return MixtureSample::validate(read_observations_csv(in));
}

MixtureSample read_sample_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(InputError::Code::Parse, "cannot open input file '" + path + "'");
  return read_sample_csv(in);
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

void write_sample_csv(std::ostream& out, const MixtureSample& sample) {
  out << "time,status";
  for (std::size_t c = 0; c < sample.k(); ++c) out << ",q" << c + 1;
  out << '\n';
  for (const auto& obs : sample.observations()) {
    out << format_double(obs.time) << ',' << obs.status;
    for (double q : obs.mix) out << ',' << format_double(q);
    out << '\n';
  }
}

}  // namespace isomix
