#include "metaepi/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "metaepi/stats.hpp"

namespace metaepi {

namespace {

constexpr std::size_t kFixedColumns = 6;
const char* const kFixedHeader[kFixedColumns] = {"meta_id",     "trial_id",  "events_treat",
                                                 "size_treat",  "events_ctrl", "size_ctrl"};

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos
                                                                     ? std::string::npos
                                                                     : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::int64_t parse_count(const std::string& field, const char* column, std::size_t row) {
    std::int64_t value = 0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (field.empty() || ec != std::errc() || ptr != last) {
        throw ParseError(row, std::string("non-integer value '") + field + "' in column " + column);
    }
    if (value < 0) throw ParseError(row, std::string("negative count in column ") + column);
    return value;
}

bool is_skippable(const std::string& line) {
    const std::string t = trim(line);
    return t.empty() || t.front() == '#';
}

}  // namespace

std::size_t Dataset::trial_count() const {
    std::size_t n = 0;
    for (const auto& ma : meta_analyses) n += ma.trials.size();
    return n;
}

std::size_t Dataset::characteristic_index(const std::string& name) const {
    const auto it = std::find(characteristic_names.begin(), characteristic_names.end(), name);
    if (it == characteristic_names.end()) throw DataError("unknown characteristic '" + name + "'");
    return static_cast<std::size_t>(it - characteristic_names.begin());
}

void validate(const Dataset& dataset) {
    const std::size_t p = dataset.characteristic_count();
    std::set<std::string> meta_ids;
    for (const auto& ma : dataset.meta_analyses) {
        if (!meta_ids.insert(ma.meta_id).second) {
            throw DataError("duplicate meta_id '" + ma.meta_id + "'");
        }
        if (ma.trials.empty()) throw DataError("meta-analysis '" + ma.meta_id + "' has no trials");
        std::set<std::string> trial_ids;
        for (const auto& t : ma.trials) {
            const std::string where = " (meta '" + ma.meta_id + "', trial '" + t.trial_id + "')";
            if (!trial_ids.insert(t.trial_id).second) throw DataError("duplicate trial_id" + where);
            if (t.size_treat < 1 || t.size_ctrl < 1) throw DataError("arm size below 1" + where);
            if (t.events_treat < 0 || t.events_ctrl < 0) throw DataError("negative events" + where);
            if (t.events_treat > t.size_treat || t.events_ctrl > t.size_ctrl) {
                throw DataError("events exceed size" + where);
            }
            if (t.flags.size() != p) throw DataError("flag count differs from characteristics" + where);
            for (auto f : t.flags) {
                if (f > 1) throw DataError("flag not in {0,1}" + where);
            }
        }
    }
}

Dataset parse_dataset(std::istream& in) {
    Dataset out;
    std::string line;
    std::size_t row = 0;
    bool have_header = false;
    std::size_t arity = 0;
    std::map<std::string, std::size_t> meta_pos;
    std::set<std::pair<std::string, std::string>> seen;

    while (std::getline(in, line)) {
        ++row;
        if (is_skippable(line)) continue;
        auto fields = split_fields(line);
        if (!have_header) {
            if (fields.size() < kFixedColumns + 1) {
                throw ParseError(row, "header needs the six count columns and at least one flag column");
            }
            for (std::size_t c = 0; c < kFixedColumns; ++c) {
                if (fields[c] != kFixedHeader[c]) {
                    throw ParseError(row, "header column " + std::to_string(c + 1) + " must be '" +
                                              kFixedHeader[c] + "', found '" + fields[c] + "'");
                }
            }
            std::set<std::string> names;
            for (std::size_t c = kFixedColumns; c < fields.size(); ++c) {
                if (fields[c].empty()) throw ParseError(row, "empty characteristic name");
                if (!names.insert(fields[c]).second) {
                    throw ParseError(row, "duplicate characteristic '" + fields[c] + "'");
                }
                out.characteristic_names.push_back(fields[c]);
            }
            arity = fields.size();
            have_header = true;
            continue;
        }
        if (fields.size() != arity) {
            throw ParseError(row, "expected " + std::to_string(arity) + " fields, found " +
                                      std::to_string(fields.size()));
        }
        if (fields[0].empty() || fields[1].empty()) throw ParseError(row, "empty meta_id or trial_id");

        Trial t;
        t.trial_id = fields[1];
        t.events_treat = parse_count(fields[2], "events_treat", row);
        t.size_treat = parse_count(fields[3], "size_treat", row);
        t.events_ctrl = parse_count(fields[4], "events_ctrl", row);
        t.size_ctrl = parse_count(fields[5], "size_ctrl", row);
        if (t.size_treat < 1 || t.size_ctrl < 1) throw ParseError(row, "arm size below 1");
        if (t.events_treat > t.size_treat || t.events_ctrl > t.size_ctrl) {
            throw ParseError(row, "events exceed size");
        }
        for (std::size_t c = kFixedColumns; c < arity; ++c) {
            if (fields[c] == "0") {
                t.flags.push_back(0);
            } else if (fields[c] == "1") {
                t.flags.push_back(1);
            } else {
                throw ParseError(row, "flag '" + fields[c] + "' not in {0,1} for characteristic " +
                                          out.characteristic_names[c - kFixedColumns]);
            }
        }
        if (!seen.emplace(fields[0], t.trial_id).second) {
            throw ParseError(row, "duplicate (meta_id, trial_id) (" + fields[0] + ", " + t.trial_id + ")");
        }
        auto [it, inserted] = meta_pos.emplace(fields[0], out.meta_analyses.size());
        if (inserted) out.meta_analyses.push_back(MetaAnalysis{fields[0], {}});
        out.meta_analyses[it->second].trials.push_back(std::move(t));
    }
    if (!have_header) throw ParseError(row, "missing header row");
    return out;
}

Dataset parse_dataset_text(const std::string& text) {
    std::istringstream in(text);
    return parse_dataset(in);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file '" + path + "'");
    return parse_dataset(in);
}

void render_dataset(const Dataset& dataset, std::ostream& out) {
    for (std::size_t c = 0; c < kFixedColumns; ++c) out << (c ? "," : "") << kFixedHeader[c];
    for (const auto& name : dataset.characteristic_names) out << ',' << name;
    out << '\n';
    for (const auto& ma : dataset.meta_analyses) {
        for (const auto& t : ma.trials) {
            out << ma.meta_id << ',' << t.trial_id << ',' << t.events_treat << ',' << t.size_treat << ','
                << t.events_ctrl << ',' << t.size_ctrl;
            for (auto f : t.flags) out << ',' << static_cast<int>(f);
            out << '\n';
        }
    }
}

std::string render_dataset_text(const Dataset& dataset) {
    std::ostringstream out;
    render_dataset(dataset, out);
    return out.str();
}

void save_dataset(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write dataset file '" + path + "'");
    render_dataset(dataset, out);
}

InformativenessReport classify(const Dataset& dataset, std::size_t min_each_side_for_variance) {
    InformativenessReport report;
    report.threshold = min_each_side_for_variance;
    const std::size_t p = dataset.characteristic_count();
    report.counts.reserve(dataset.meta_analyses.size());
    for (const auto& ma : dataset.meta_analyses) {
        std::vector<CharacteristicCounts> row(p);
        for (const auto& t : ma.trials) {
            for (std::size_t j = 0; j < p; ++j) {
                if (t.flags[j]) {
                    ++row[j].with_flag;
                } else {
                    ++row[j].without_flag;
                }
            }
        }
        for (auto& c : row) {
            c.informative = c.with_flag >= 1 && c.without_flag >= 1;
            c.cut_eligible = c.informative && c.with_flag >= min_each_side_for_variance &&
                             c.without_flag >= min_each_side_for_variance;
        }
        report.counts.push_back(std::move(row));
    }
    return report;
}

Dataset informative_subset(const Dataset& dataset, const std::vector<std::size_t>& characteristics,
                           std::string* warning) {
    if (characteristics.empty()) throw DataError("informative_subset needs at least one characteristic");
    for (auto j : characteristics) {
        if (j >= dataset.characteristic_count()) throw DataError("characteristic index out of range");
    }
    const auto report = classify(dataset);
    Dataset out;
    out.characteristic_names = dataset.characteristic_names;
    for (std::size_t m = 0; m < dataset.meta_analyses.size(); ++m) {
        const bool keep = std::all_of(characteristics.begin(), characteristics.end(),
                                      [&](std::size_t j) { return report.at(m, j).informative; });
        if (keep) out.meta_analyses.push_back(dataset.meta_analyses[m]);
    }
    if (out.meta_analyses.empty() && warning) {
        *warning = "no meta-analysis is informative for every requested characteristic";
    }
    return out;
}

Dataset relabel(const Dataset& dataset, std::size_t j) {
    if (j >= dataset.characteristic_count()) throw DataError("characteristic index out of range");
    Dataset out = dataset;
    for (auto& ma : out.meta_analyses) {
        for (auto& t : ma.trials) t.flags[j] = static_cast<std::uint8_t>(1 - t.flags[j]);
    }
    return out;
}

DatasetSummary summarize(const Dataset& dataset) {
    DatasetSummary s;
    s.meta_count = dataset.meta_analyses.size();
    s.trial_count = dataset.trial_count();
    s.characteristic_names = dataset.characteristic_names;
    s.flagged_trials.assign(dataset.characteristic_count(), 0);
    std::vector<double> sizes;
    for (const auto& ma : dataset.meta_analyses) {
        sizes.push_back(static_cast<double>(ma.trials.size()));
        for (const auto& t : ma.trials) {
            std::size_t set = 0;
            for (std::size_t j = 0; j < t.flags.size(); ++j) {
                s.flagged_trials[j] += t.flags[j];
                set += t.flags[j];
            }
            if (set == t.flags.size()) ++s.trials_all_flags;
            if (set == 0) ++s.trials_no_flags;
        }
    }
    if (!sizes.empty()) {
        std::sort(sizes.begin(), sizes.end());
        s.trials_min = sizes.front();
        s.trials_max = sizes.back();
        s.trials_q1 = stats::quantile_sorted(sizes, 0.25);
        s.trials_median = stats::quantile_sorted(sizes, 0.5);
        s.trials_q3 = stats::quantile_sorted(sizes, 0.75);
    }
    return s;
}

}  // namespace metaepi
