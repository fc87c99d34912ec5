#include "spm/harness/io.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace spm {

namespace {

std::size_t column_size(const Column& c) {
    return std::visit([](const auto& v) { return v.size(); }, c);
}

std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

std::vector<std::vector<std::string>> split_records(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += ch;
            }
            continue;
        }
        if (ch == '"') {
            quoted = true;
            any = true;
        } else if (ch == ',') {
            row.push_back(std::move(cell));
            cell.clear();
            any = true;
        } else if (ch == '\n' || ch == '\r') {
            if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !cell.empty()) {
                row.push_back(std::move(cell));
                records.push_back(std::move(row));
            }
            row.clear();
            cell.clear();
            any = false;
        } else {
            cell += ch;
            any = true;
        }
    }
    if (quoted) throw std::runtime_error("csv: unterminated quoted field");
    if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        records.push_back(std::move(row));
    }
    return records;
}

bool parse_real(const std::string& s, double& out) {
    if (s.empty()) {
        out = std::numeric_limits<double>::quiet_NaN();
        return true;
    }
    if (s == "inf" || s == "-inf") {
        out = s[0] == '-' ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
        return true;
    }
    const char* first = s.data();
    const char* last = first + s.size();
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

}  // namespace

std::size_t Table::rows() const { return columns.empty() ? 0 : column_size(columns.front()); }

void Table::add(const std::string& name, std::vector<double> values) {
    names.push_back(name);
    columns.emplace_back(std::move(values));
}

void Table::add(const std::string& name, std::vector<std::string> values) {
    names.push_back(name);
    columns.emplace_back(std::move(values));
}

const std::vector<double>& Table::real(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) {
            if (const auto* v = std::get_if<std::vector<double>>(&columns[i])) return *v;
            throw std::invalid_argument("table: column '" + name + "' is not numeric");
        }
    throw std::invalid_argument("table: no column '" + name + "'");
}

const std::vector<std::string>& Table::text(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) {
            if (const auto* v = std::get_if<std::vector<std::string>>(&columns[i])) return *v;
            throw std::invalid_argument("table: column '" + name + "' is not text");
        }
    throw std::invalid_argument("table: no column '" + name + "'");
}

void Table::validate() const {
    if (names.size() != columns.size()) throw std::logic_error("table: names and columns differ in count");
    std::set<std::string> seen;
    for (const auto& n : names)
        if (!seen.insert(n).second) throw std::logic_error("table: duplicate column '" + n + "'");
    for (const auto& c : columns)
        if (column_size(c) != rows()) throw std::logic_error("table: ragged columns");
}

bool tables_equal(const Table& a, const Table& b) {
    if (a.names != b.names || a.columns.size() != b.columns.size()) return false;
    for (std::size_t i = 0; i < a.columns.size(); ++i) {
        if (a.columns[i].index() != b.columns[i].index()) return false;
        if (const auto* x = std::get_if<std::vector<double>>(&a.columns[i])) {
            const auto& y = std::get<std::vector<double>>(b.columns[i]);
            if (x->size() != y.size()) return false;
            for (std::size_t k = 0; k < x->size(); ++k) {
                const double u = (*x)[k], v = y[k];
                if (std::isnan(u) != std::isnan(v)) return false;
                if (!std::isnan(u) && std::memcmp(&u, &v, sizeof u) != 0) return false;
            }
        } else if (std::get<std::vector<std::string>>(a.columns[i]) !=
                   std::get<std::vector<std::string>>(b.columns[i])) {
            return false;
        }
    }
    return true;
}

std::string format_real(double x) {
    if (std::isnan(x)) return "";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string to_csv(const Table& t) {
    t.validate();
    std::string out;
    for (std::size_t i = 0; i < t.names.size(); ++i) {
        if (i) out += ',';
        out += quote(t.names[i]);
    }
    out += '\n';
    const std::size_t n = t.rows();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < t.columns.size(); ++i) {
            if (i) out += ',';
            if (const auto* v = std::get_if<std::vector<double>>(&t.columns[i]))
                out += format_real((*v)[r]);
            else
                out += quote(std::get<std::vector<std::string>>(t.columns[i])[r]);
        }
        out += '\n';
    }
    return out;
}

Table parse_csv(const std::string& text) {
    const auto rec = split_records(text);
    if (rec.empty()) throw std::runtime_error("csv: empty input");
    const auto& header = rec.front();
    const std::size_t w = header.size();
    for (std::size_t r = 1; r < rec.size(); ++r)
        if (rec[r].size() != w)
            throw std::runtime_error("csv: row " + std::to_string(r) + " has " + std::to_string(rec[r].size()) +
                                     " fields, expected " + std::to_string(w));
    Table t;
    for (std::size_t c = 0; c < w; ++c) {
        std::vector<double> reals;
        reals.reserve(rec.size() - 1);
        bool numeric = true;
        for (std::size_t r = 1; r < rec.size() && numeric; ++r) {
            double x;
            numeric = parse_real(rec[r][c], x);
            reals.push_back(x);
        }
        if (numeric) {
            t.add(header[c], std::move(reals));
        } else {
            std::vector<std::string> txt;
            for (std::size_t r = 1; r < rec.size(); ++r) txt.push_back(rec[r][c]);
            t.add(header[c], std::move(txt));
        }
    }
    t.validate();
    return t;
}

void write_csv(const std::filesystem::path& path, const Table& t) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << to_csv(t);
}

Table read_csv(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    return nlohmann::json::parse(f);
}

Table trajectory_table(const Trajectory& tr) {
    tr.validate();
    Table t;
    t.add("clock", std::vector<std::string>(tr.size(), to_string(tr.clock)));
    t.add("time", tr.times);
    for (std::size_t c = 0; c < tr.columns.size(); ++c) {
        std::vector<double> v(tr.size());
        for (std::size_t i = 0; i < tr.size(); ++i) v[i] = tr.states[i][c];
        t.add(tr.columns[c], std::move(v));
    }
    return t;
}

std::string config_hash(const nlohmann::json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace spm
