#include "xaudit/ingest.hpp"

#include "xaudit/csv.hpp"
#include "xaudit/error.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace xaudit {

namespace {

std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// "YYYY-MM-DD HH:MM:SS" as seconds since the epoch.
std::optional<long long> parse_timestamp(std::string_view s) {
  if (s.size() < 19) return std::nullopt;
  auto year = parse_int(s.substr(0, 4));
  auto month = parse_int(s.substr(5, 2));
  auto day = parse_int(s.substr(8, 2));
  auto hh = parse_int(s.substr(11, 2));
  auto mm = parse_int(s.substr(14, 2));
  auto ss = parse_int(s.substr(17, 2));
  if (!year || !month || !day || !hh || !mm || !ss) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year(static_cast<int>(*year)),
                           std::chrono::month(static_cast<unsigned>(*month)),
                           std::chrono::day(static_cast<unsigned>(*day))};
  if (!ymd.ok()) return std::nullopt;
  const auto days = sys_days(ymd).time_since_epoch().count();
  return static_cast<long long>(days) * 86400 + *hh * 3600 + *mm * 60 + *ss;
}

std::string fmt_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::vector<FeatureMeta> compas_schema() {
  return {
      {"age", FeatureKind::continuous, false, false},
      {"two_year_recid", FeatureKind::binary, false, false},
      {"priors_count", FeatureKind::continuous, false, false},
      {"length_of_stay", FeatureKind::continuous, false, false},
      {"c_charge_degree_F", FeatureKind::binary, false, false},
      {"c_charge_degree_M", FeatureKind::binary, false, false},
      {"sex_Female", FeatureKind::binary, false, false},
      {"sex_Male", FeatureKind::binary, false, false},
      {"African-American", FeatureKind::binary, true, false},
  };
}

std::size_t ingest_compas(const std::filesystem::path& raw, const std::filesystem::path& out) {
  const auto table = csv::read(raw);
  auto need = [&](std::string_view name) {
    const auto c = table.column(name);
    if (c == std::string::npos) {
      throw SchemaError(raw.string() + ": missing column '" + std::string(name) + "'");
    }
    return c;
  };
  const auto c_days = need("days_b_screening_arrest");
  const auto c_recid = need("is_recid");
  const auto c_degree = need("c_charge_degree");
  const auto c_score = need("score_text");
  const auto c_age = need("age");
  const auto c_two = need("two_year_recid");
  const auto c_priors = need("priors_count");
  const auto c_in = need("c_jail_in");
  const auto c_out = need("c_jail_out");
  const auto c_sex = need("sex");
  const auto c_race = need("race");

  std::ostringstream os;
  for (const auto& m : compas_schema()) os << m.name << ',';
  os << "high_risk\n";

  std::size_t written = 0;
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) continue;
    const auto days = parse_int(row[c_days]);
    const auto recid = parse_int(row[c_recid]);
    if (!days || *days < -30 || *days > 30) continue;
    if (!recid || *recid == -1) continue;
    const auto& degree = row[c_degree];
    const auto& score = row[c_score];
    if (degree == "O" || score == "N/A" || score.empty()) continue;

    const auto age = parse_int(row[c_age]);
    const auto two = parse_int(row[c_two]);
    const auto priors = parse_int(row[c_priors]);
    const auto t_in = parse_timestamp(row[c_in]);
    const auto t_out = parse_timestamp(row[c_out]);
    if (!age || !two || !priors || !t_in || !t_out) continue;
    const auto stay = static_cast<long long>(
        std::floor(static_cast<double>(*t_out - *t_in) / 86400.0));

    const auto& sex = row[c_sex];
    os << *age << ',' << *two << ',' << *priors << ',' << stay << ',' << (degree == "F") << ','
       << (degree == "M") << ',' << (sex == "Female") << ',' << (sex == "Male") << ','
       << (row[c_race] == "African-American") << ',' << (score == "High") << '\n';
    ++written;
  }
  if (written == 0) throw EmptyInputError(raw.string() + ": no rows survive filtering");
  csv::write_atomic(out, os.str());
  return written;
}

namespace {

struct GermanColumn {
  const char* name;
  bool categorical;
};

// UCI attribute order; the label follows the twentieth attribute.
constexpr GermanColumn kGermanColumns[] = {
    {"CheckingAccountStatus", true}, {"LoanDuration", false},
    {"CreditHistory", true},         {"LoanPurpose", true},
    {"LoanAmount", false},           {"SavingsAccount", true},
    {"EmploymentDuration", true},    {"LoanRateAsPercentOfIncome", false},
    {"PersonalStatus", true},        {"OtherDebtors", true},
    {"YearsAtCurrentHome", false},   {"Property", true},
    {"Age", false},                  {"OtherInstallmentPlans", true},
    {"Housing", true},               {"NumberOfOtherLoansAtBank", false},
    {"Job", true},                   {"NumberOfLiableIndividuals", false},
    {"HasTelephone", true},          {"ForeignWorker", true},
};

}  // namespace

std::vector<FeatureMeta> german_schema() {
  std::vector<FeatureMeta> schema;
  for (const auto& c : kGermanColumns) {
    if (std::string_view(c.name) == "PersonalStatus") continue;
    schema.push_back({c.name, c.categorical ? FeatureKind::categorical : FeatureKind::continuous,
                      false, false});
  }
  schema.push_back({"Gender", FeatureKind::binary, true, false});
  return schema;
}

std::size_t ingest_german(const std::filesystem::path& raw, const std::filesystem::path& out) {
  std::ifstream in(raw);
  if (!in) throw DataError("cannot open " + raw.string());

  const auto schema = german_schema();
  std::ostringstream os;
  for (const auto& m : schema) os << m.name << ',';
  os << "GoodCustomer\n";

  std::string line;
  std::size_t line_no = 0;
  std::size_t written = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream tokens(line);
    std::vector<std::string> cells;
    for (std::string t; tokens >> t;) cells.push_back(t);
    if (cells.size() != 21) {
      throw ParseError(raw.string() + ": expected 21 fields at row " + std::to_string(line_no),
                       line_no, cells.size());
    }
    std::vector<double> values;
    double gender = 0.0;
    for (std::size_t a = 0; a < 20; ++a) {
      const auto& cell = cells[a];
      double v = 0.0;
      if (kGermanColumns[a].categorical) {
        // Codes look like A<attribute><value>, e.g. A43 or A410.
        const auto prefix = "A" + std::to_string(a + 1);
        if (cell.rfind(prefix, 0) != 0) {
          throw ParseError("bad code '" + cell + "' at row " + std::to_string(line_no), line_no, a + 1);
        }
        const auto code = parse_int(std::string_view(cell).substr(prefix.size()));
        if (!code) {
          throw ParseError("bad code '" + cell + "' at row " + std::to_string(line_no), line_no, a + 1);
        }
        v = static_cast<double>(*code);
      } else {
        const auto num = parse_int(cell);
        if (!num) {
          throw ParseError("bad number '" + cell + "' at row " + std::to_string(line_no), line_no, a + 1);
        }
        v = static_cast<double>(*num);
      }
      if (std::string_view(kGermanColumns[a].name) == "PersonalStatus") {
        gender = (cell == "A91" || cell == "A93" || cell == "A94") ? 1.0 : 0.0;
      } else {
        values.push_back(v);
      }
    }
    values.push_back(gender);
    const auto credit = parse_int(cells[20]);
    if (!credit || (*credit != 1 && *credit != 2)) {
      throw ParseError("bad class '" + cells[20] + "' at row " + std::to_string(line_no), line_no, 21);
    }
    for (double v : values) os << fmt_number(v) << ',';
    os << (*credit == 1 ? 1 : 0) << '\n';
    ++written;
  }
  if (written == 0) throw EmptyInputError(raw.string() + ": file is empty");
  csv::write_atomic(out, os.str());
  return written;
}

}  // namespace xaudit
