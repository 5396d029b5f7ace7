#pragma once

// Meta-epidemiological dataset: two-arm binary-outcome trials grouped by
// meta-analysis, each trial carrying p binary characteristic flags.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace metaepi {

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t row, const std::string& what)
        : std::runtime_error(what + " at row " + std::to_string(row)), row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Trial {
    std::string trial_id;
    std::int64_t events_treat = 0;
    std::int64_t size_treat = 1;
    std::int64_t events_ctrl = 0;
    std::int64_t size_ctrl = 1;
    std::vector<std::uint8_t> flags;  // X_ijm, one entry per characteristic

    bool operator==(const Trial&) const = default;
};

struct MetaAnalysis {
    std::string meta_id;
    std::vector<Trial> trials;

    bool operator==(const MetaAnalysis&) const = default;
};

struct Dataset {
    std::vector<std::string> characteristic_names;
    std::vector<MetaAnalysis> meta_analyses;

    std::size_t characteristic_count() const { return characteristic_names.size(); }
    std::size_t trial_count() const;
    std::size_t characteristic_index(const std::string& name) const;

    bool operator==(const Dataset&) const = default;
};

// Throws DataError when any structural invariant is broken.
void validate(const Dataset& dataset);

// Reads the flat comma-delimited layout:
//   meta_id,trial_id,events_treat,size_treat,events_ctrl,size_ctrl,<flag>...
// Lines starting with '#' and blank lines are skipped. Row numbers in
// errors are 1-based physical line numbers.
Dataset parse_dataset(std::istream& in);
Dataset parse_dataset_text(const std::string& text);
Dataset load_dataset(const std::string& path);

void render_dataset(const Dataset& dataset, std::ostream& out);
std::string render_dataset_text(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::string& path);

struct CharacteristicCounts {
    std::size_t with_flag = 0;
    std::size_t without_flag = 0;
    bool informative = false;   // >= 1 trial on each side
    bool cut_eligible = false;  // >= threshold trials on each side
};

struct InformativenessReport {
    std::size_t threshold = 2;
    // [meta][characteristic]
    std::vector<std::vector<CharacteristicCounts>> counts;

    const CharacteristicCounts& at(std::size_t meta, std::size_t j) const {
        return counts.at(meta).at(j);
    }
};

InformativenessReport classify(const Dataset& dataset, std::size_t min_each_side_for_variance = 2);

// Keeps the meta-analyses informative for every listed characteristic.
// `warning` (when non-null) receives a message if nothing survives.
Dataset informative_subset(const Dataset& dataset, const std::vector<std::size_t>& characteristics,
                           std::string* warning = nullptr);

// Swaps the two groups of characteristic j: X := 1 - X.
Dataset relabel(const Dataset& dataset, std::size_t j);

// Order statistics use linear interpolation between adjacent order
// statistics: position h = (n - 1) q, value x[floor h] + frac(h) * gap.
struct DatasetSummary {
    std::size_t meta_count = 0;
    std::size_t trial_count = 0;
    double trials_min = 0;
    double trials_q1 = 0;
    double trials_median = 0;
    double trials_q3 = 0;
    double trials_max = 0;
    std::vector<std::string> characteristic_names;
    std::vector<std::size_t> flagged_trials;          // per characteristic
    std::size_t trials_all_flags = 0;
    std::size_t trials_no_flags = 0;
    std::string quantile_rule = "linear interpolation between order statistics (h = (n-1)q)";
};

DatasetSummary summarize(const Dataset& dataset);

}  // namespace metaepi
