#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "abstain/metrics.hpp"

namespace abstain {

enum class ReportFormat { Json, Csv, Markdown };

ReportFormat report_format_from_string(const std::string& s);

inline constexpr const char* kDegenerateMarker = "†";  // dagger

/// Methods x {ER, A-Acc, R-Acc, A-Pre}. A row without metrics renders as "-".
struct MethodTable {
    struct Row {
        std::string method;
        std::optional<MetricReport> metrics;
        std::size_t degenerate_scores = 0;
    };
    std::string title;
    std::vector<Row> rows;
};

/// Probes/methods (rows) evaluated on several test dumps (columns); cells hold
/// A-Acc, nullopt where dimensions were incompatible.
struct GridTable {
    std::string title;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<std::optional<double>>> cells;
};

/// Per-layer sweep curve.
struct CurveTable {
    struct Point {
        int layer = 0;
        double val_a_acc = 0.0;
        double test_a_acc = 0.0;
    };
    std::string title;
    std::string channel;
    std::vector<Point> points;
};

nlohmann::json to_json(const MethodTable& t);
nlohmann::json to_json(const GridTable& t);
nlohmann::json to_json(const CurveTable& t);
nlohmann::json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

std::string render(const MethodTable& t, ReportFormat f);
std::string render(const GridTable& t, ReportFormat f);
std::string render(const CurveTable& t, ReportFormat f);

/// Renders a JSON document produced by one of the to_json overloads.
std::string render_json_report(const nlohmann::json& j, ReportFormat f);

}  // namespace abstain
