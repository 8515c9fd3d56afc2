#include "abstain/report.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "abstain/error.hpp"

namespace abstain {

using json = nlohmann::json;

ReportFormat report_format_from_string(const std::string& s) {
    if (s == "json") return ReportFormat::Json;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "md" || s == "markdown") return ReportFormat::Markdown;
    throw std::invalid_argument("unknown report format '" + s + "'");
}

namespace {

std::string fixed(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string cell(double v, bool degenerate, int digits) {
    auto s = fixed(v, digits);
    if (degenerate) s += kDegenerateMarker;
    return s;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

json to_json(const MetricReport& r) {
    return {{"er", r.er},
            {"a_acc", r.a_acc},
            {"r_acc", r.r_acc},
            {"a_pre", r.a_pre},
            {"tau", r.tau},
            {"answered", r.answered},
            {"abstained", r.abstained},
            {"r_acc_degenerate", r.r_acc_degenerate},
            {"a_pre_degenerate", r.a_pre_degenerate}};
}

MetricReport metric_report_from_json(const json& j) {
    MetricReport r;
    r.er = j.at("er").get<double>();
    r.a_acc = j.at("a_acc").get<double>();
    r.r_acc = j.at("r_acc").get<double>();
    r.a_pre = j.at("a_pre").get<double>();
    r.tau = j.at("tau").get<double>();
    r.answered = j.at("answered").get<std::size_t>();
    r.abstained = j.at("abstained").get<std::size_t>();
    r.r_acc_degenerate = j.at("r_acc_degenerate").get<bool>();
    r.a_pre_degenerate = j.at("a_pre_degenerate").get<bool>();
    return r;
}

json to_json(const MethodTable& t) {
    json rows = json::array();
    for (const auto& r : t.rows) {
        json row = {{"method", r.method}, {"available", r.metrics.has_value()}, {"degenerate_scores", r.degenerate_scores}};
        if (r.metrics) row["metrics"] = to_json(*r.metrics);
        rows.push_back(std::move(row));
    }
    return {{"kind", "methods"}, {"title", t.title}, {"rows", std::move(rows)}};
}

json to_json(const GridTable& t) {
    json cells = json::array();
    for (const auto& row : t.cells) {
        json r = json::array();
        for (const auto& c : row) r.push_back(c ? json(*c) : json(nullptr));
        cells.push_back(std::move(r));
    }
    return {{"kind", "grid"}, {"title", t.title}, {"rows", t.row_labels}, {"columns", t.col_labels}, {"cells", cells}};
}

json to_json(const CurveTable& t) {
    json pts = json::array();
    for (const auto& p : t.points)
        pts.push_back({{"layer", p.layer}, {"val_a_acc", p.val_a_acc}, {"test_a_acc", p.test_a_acc}});
    return {{"kind", "curve"}, {"title", t.title}, {"channel", t.channel}, {"points", std::move(pts)}};
}

std::string render(const MethodTable& t, ReportFormat f) {
    if (f == ReportFormat::Json) return to_json(t).dump(2) + "\n";
    std::ostringstream os;
    if (f == ReportFormat::Markdown) {
        if (!t.title.empty()) os << "### " << t.title << "\n\n";
        os << "| Method | ER | A-Acc | R-Acc | A-Pre |\n";
        os << "|---|---|---|---|---|\n";
        for (const auto& r : t.rows) {
            os << "| " << r.method << " | ";
            if (!r.metrics) {
                os << "- | - | - | - |\n";
                continue;
            }
            const auto& m = *r.metrics;
            os << fixed(m.er) << " | " << fixed(m.a_acc) << " | " << cell(m.r_acc, m.r_acc_degenerate, 3) << " | "
               << cell(m.a_pre, m.a_pre_degenerate, 3) << " |\n";
        }
        bool any_degenerate = false;
        for (const auto& r : t.rows)
            if (r.metrics && (r.metrics->r_acc_degenerate || r.metrics->a_pre_degenerate)) any_degenerate = true;
        if (any_degenerate) os << "\n" << kDegenerateMarker << " empty denominator (vacuous value)\n";
        return os.str();
    }
    os << "Method,ER,A-Acc,R-Acc,A-Pre,tau,answered,abstained\n";
    for (const auto& r : t.rows) {
        os << csv_escape(r.method) << ',';
        if (!r.metrics) {
            os << "-,-,-,-,-,-,-\n";
            continue;
        }
        const auto& m = *r.metrics;
        os << fixed(m.er, 6) << ',' << fixed(m.a_acc, 6) << ',' << cell(m.r_acc, m.r_acc_degenerate, 6) << ','
           << cell(m.a_pre, m.a_pre_degenerate, 6) << ',' << fixed(m.tau, 6) << ',' << m.answered << ','
           << m.abstained << '\n';
    }
    return os.str();
}

std::string render(const GridTable& t, ReportFormat f) {
    if (f == ReportFormat::Json) return to_json(t).dump(2) + "\n";
    std::ostringstream os;
    const bool md = f == ReportFormat::Markdown;
    if (md && !t.title.empty()) os << "### " << t.title << "\n\n";
    auto sep = md ? " | " : ",";
    os << (md ? "| Method" : "Method");
    for (const auto& c : t.col_labels) os << sep << (md ? c : csv_escape(c));
    os << (md ? " |\n" : "\n");
    if (md) {
        os << "|---";
        for (std::size_t i = 0; i < t.col_labels.size(); ++i) os << "|---";
        os << "|\n";
    }
    for (std::size_t r = 0; r < t.row_labels.size(); ++r) {
        os << (md ? "| " + t.row_labels[r] : csv_escape(t.row_labels[r]));
        for (const auto& c : t.cells[r]) os << sep << (c ? fixed(*c, md ? 3 : 6) : "-");
        os << (md ? " |\n" : "\n");
    }
    return os.str();
}

std::string render(const CurveTable& t, ReportFormat f) {
    if (f == ReportFormat::Json) return to_json(t).dump(2) + "\n";
    std::ostringstream os;
    if (f == ReportFormat::Markdown) {
        if (!t.title.empty()) os << "### " << t.title << "\n\n";
        os << "| Layer | Val A-Acc | Test A-Acc |\n|---|---|---|\n";
        for (const auto& p : t.points)
            os << "| " << p.layer << " | " << fixed(p.val_a_acc) << " | " << fixed(p.test_a_acc) << " |\n";
        return os.str();
    }
    os << "layer,val_a_acc,test_a_acc\n";
    for (const auto& p : t.points) os << p.layer << ',' << fixed(p.val_a_acc, 6) << ',' << fixed(p.test_a_acc, 6) << '\n';
    return os.str();
}

std::string render_json_report(const json& j, ReportFormat f) {
    try {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "methods") {
            MethodTable t;
            t.title = j.value("title", "");
            for (const auto& r : j.at("rows")) {
                MethodTable::Row row;
                row.method = r.at("method").get<std::string>();
                row.degenerate_scores = r.value("degenerate_scores", std::size_t{0});
                if (r.contains("metrics")) row.metrics = metric_report_from_json(r.at("metrics"));
                t.rows.push_back(std::move(row));
            }
            return render(t, f);
        }
        if (kind == "grid") {
            GridTable t;
            t.title = j.value("title", "");
            t.row_labels = j.at("rows").get<std::vector<std::string>>();
            t.col_labels = j.at("columns").get<std::vector<std::string>>();
            for (const auto& row : j.at("cells")) {
                std::vector<std::optional<double>> cells;
                for (const auto& c : row) cells.push_back(c.is_null() ? std::nullopt : std::optional<double>(c.get<double>()));
                t.cells.push_back(std::move(cells));
            }
            return render(t, f);
        }
        if (kind == "curve") {
            CurveTable t;
            t.title = j.value("title", "");
            t.channel = j.value("channel", "");
            for (const auto& p : j.at("points"))
                t.points.push_back({p.at("layer").get<int>(), p.at("val_a_acc").get<double>(),
                                    p.at("test_a_acc").get<double>()});
            return render(t, f);
        }
        throw FormatError("unknown report kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
}

}  // namespace abstain
