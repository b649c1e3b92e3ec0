#include "lvr/manifest.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "lvr/csv.hpp"
#include "lvr/rng.hpp"

namespace lvr {

namespace fs = std::filesystem;

Manifest load_manifest(const fs::path& path, float airlight) {
  if (!fs::is_regular_file(path)) throw std::runtime_error(path.string() + ": manifest not found");
  const csv::Table table = csv::read(path);
  const csv::Row expected = csv::parse_row(kManifestHeader);
  std::vector<std::size_t> cols;
  for (const auto& name : expected) {
    try {
      cols.push_back(table.column(name));
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ": header lacks column '" + name + "'");
    }
  }
  Manifest m;
  m.path = path;
  const fs::path dir = fs::absolute(path).parent_path();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& raw = table.rows[r];
    const std::size_t line = table.lines[r];
    try {
      csv::Row row;
      for (auto c : cols) {
        if (c >= raw.size()) throw std::runtime_error("expected " + std::to_string(table.header.size()) + " fields");
        row.push_back(raw[c]);
      }
      ManifestEntry e;
      e.record = parse_manifest_row(row, airlight);
      e.line = line;
      const fs::path src(e.record.source), deg(e.record.degraded);
      e.source = src.is_absolute() ? src : (dir / src).lexically_normal();
      e.degraded = deg.is_absolute() ? deg : (dir / deg).lexically_normal();
      m.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      m.warnings.push_back(path.string() + ":" + std::to_string(line) + ": skipped row: " + ex.what());
    }
  }
  return m;
}

ManifestSplits split_manifest(const std::vector<ManifestEntry>& entries, const SplitFractions& f, std::uint64_t seed) {
  const double sum = f.train + f.val + f.test;
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must be non-negative and sum to 1");
  }
  const std::size_t n = entries.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.train)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.val)));
  const std::size_t n_test = f.test > 0 ? n - n_train - n_val : 0;
  const std::size_t counts[] = {n_train, n_val, n_test};
  const double fracs[] = {f.train, f.val, f.test};
  const char* names[] = {"train", "val", "test"};
  for (int s = 0; s < 3; ++s) {
    if (fracs[s] > 0 && counts[s] == 0) {
      throw std::invalid_argument(std::string(names[s]) + " split would be empty (" + std::to_string(n) +
                                  " rows, fraction " + std::to_string(fracs[s]) + ")");
    }
  }
  ManifestSplits out;
  std::size_t k = 0;
  for (; k < n_train; ++k) out.train.push_back(entries[order[k]]);
  for (; k < n_train + n_val; ++k) out.val.push_back(entries[order[k]]);
  // Leftover rounding rows go to train when test is disabled.
  for (; k < n; ++k) (f.test > 0 ? out.test : out.train).push_back(entries[order[k]]);
  check_disjoint(out);
  return out;
}

void check_disjoint(const ManifestSplits& s) {
  std::map<std::string, const char*> owner;
  auto claim = [&](const std::vector<ManifestEntry>& split, const char* name) {
    for (const auto& e : split) {
      for (const fs::path* p : {&e.source, &e.degraded}) {
        auto [it, inserted] = owner.emplace(p->string(), name);
        if (!inserted && std::string(it->second) != name) {
          throw std::logic_error("split leakage: " + p->string() + " is in both " + it->second + " and " + name);
        }
      }
    }
  };
  claim(s.train, "train");
  claim(s.val, "val");
  claim(s.test, "test");
}

std::vector<ManifestEntry> select_split(const ManifestSplits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  if (name == "all") {
    std::vector<ManifestEntry> all = s.train;
    all.insert(all.end(), s.val.begin(), s.val.end());
    all.insert(all.end(), s.test.begin(), s.test.end());
    return all;
  }
  throw std::invalid_argument("unknown split '" + name + "' (expected train, val, test or all)");
}

}  // namespace lvr
