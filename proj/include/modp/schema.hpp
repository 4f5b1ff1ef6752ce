#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "modp/error.hpp"
#include "modp/text.hpp"

namespace modp {

enum class QuestionKind { categorical, quantile, merged };

inline const char* kind_name(QuestionKind k) {
    switch (k) {
        case QuestionKind::categorical: return "categorical";
        case QuestionKind::quantile: return "quantile";
        case QuestionKind::merged: return "merged";
    }
    return "?";
}

struct QuestionSpec {
    std::string name;
    QuestionKind kind = QuestionKind::categorical;
    std::vector<std::string> categories;
    // quantile columns only
    std::vector<double> bin_edges;            // strictly increasing, size = numeric_bins-1
    size_t numeric_bins = 0;                  // categories[0..numeric_bins) are bins
    std::vector<std::string> missing_codes;   // trailing categories, matched verbatim
    // merged columns only; directive order preserved
    std::vector<std::pair<std::string, std::string>> merge_map;

    size_t size() const { return categories.size(); }

    // raw cell value -> category index, after merging / binning
    size_t category_index(const std::string& raw) const {
        switch (kind) {
            case QuestionKind::categorical: {
                for (size_t k = 0; k < categories.size(); ++k)
                    if (categories[k] == raw) return k;
                break;
            }
            case QuestionKind::merged: {
                for (const auto& [from, to] : merge_map) {
                    if (from == raw) {
                        for (size_t k = 0; k < categories.size(); ++k)
                            if (categories[k] == to) return k;
                    }
                }
                break;
            }
            case QuestionKind::quantile: {
                for (size_t k = 0; k < missing_codes.size(); ++k)
                    if (missing_codes[k] == raw) return numeric_bins + k;
                const auto v = parse_double(raw);
                if (!v) break;
                // value equal to an edge goes to the lower bin
                const auto it = std::lower_bound(bin_edges.begin(), bin_edges.end(), *v);
                return static_cast<size_t>(it - bin_edges.begin());
            }
        }
        throw ValidationError("question '" + name + "': unmappable value '" + raw + "'");
    }

    void validate() const {
        if (categories.size() < 2)
            throw ValidationError("question '" + name + "' has fewer than 2 categories");
        std::set<std::string> seen(categories.begin(), categories.end());
        if (seen.size() != categories.size())
            throw ValidationError("question '" + name + "' has duplicate categories");
        if (kind == QuestionKind::quantile) {
            if (bin_edges.size() + 1 != numeric_bins)
                throw ValidationError("question '" + name + "': edge count must be bins-1");
            for (size_t k = 1; k < bin_edges.size(); ++k)
                if (!(bin_edges[k - 1] < bin_edges[k]))
                    throw ValidationError("question '" + name + "': bin edges not strictly increasing");
        }
    }
};

struct CategoricalSchema {
    std::vector<QuestionSpec> questions;
    std::vector<size_t> block_starts;  // length Q+1, [0]=0, [Q]=total columns

    size_t question_count() const { return questions.size(); }
    size_t total_columns() const { return block_starts.empty() ? 0 : block_starts.back(); }
    size_t block_size(size_t q) const { return block_starts[q + 1] - block_starts[q]; }

    void rebuild_block_starts() {
        block_starts.assign(1, 0);
        for (const auto& q : questions) block_starts.push_back(block_starts.back() + q.size());
    }

    void validate() const {
        if (block_starts.size() != questions.size() + 1 || block_starts.front() != 0)
            throw ValidationError("schema: malformed block_starts");
        for (size_t q = 0; q < questions.size(); ++q) {
            questions[q].validate();
            if (block_starts[q + 1] != block_starts[q] + questions[q].size())
                throw ValidationError("schema: block_starts inconsistent with category counts");
        }
    }
};

// ---------------------------------------------------------------------------
// directives: one line per column,
//   <column> categorical
//   <column> quantile <bins> [missing=<code>[,<code>...]]
//   <column> merge <raw>=<cat>[,<raw>=<cat>...]
// columns absent from the file default to categorical
// ---------------------------------------------------------------------------

struct ColumnDirective {
    QuestionKind kind = QuestionKind::categorical;
    size_t bins = 0;
    std::vector<std::string> missing_codes;
    std::vector<std::pair<std::string, std::string>> merge_map;
};

inline std::map<std::string, ColumnDirective> parse_directives(const std::string& text) {
    std::map<std::string, ColumnDirective> out;
    for (const auto& raw_line : split_lines(text)) {
        const std::string line = trim(raw_line);
        if (line.empty() || line[0] == '#') continue;
        const auto tok = tokenize(line);
        if (tok.size() < 2) throw ValidationError("directive line needs '<column> <kind>': " + line);
        const std::string& col = tok[0];
        if (out.count(col)) throw ValidationError("duplicate directive for column '" + col + "'");
        ColumnDirective d;
        if (tok[1] == "categorical") {
            d.kind = QuestionKind::categorical;
        } else if (tok[1] == "quantile") {
            d.kind = QuestionKind::quantile;
            if (tok.size() < 3) throw ValidationError("quantile directive needs a bin count: " + line);
            const auto bins = parse_int(tok[2]);
            if (!bins || *bins < 2) throw ValidationError("bad bin count in: " + line);
            d.bins = static_cast<size_t>(*bins);
            for (size_t t = 3; t < tok.size(); ++t) {
                if (tok[t].rfind("missing=", 0) == 0) {
                    for (auto& code : split(tok[t].substr(8), ','))
                        if (!code.empty()) d.missing_codes.push_back(code);
                } else {
                    throw ValidationError("unrecognized quantile option '" + tok[t] + "'");
                }
            }
        } else if (tok[1] == "merge") {
            d.kind = QuestionKind::merged;
            if (tok.size() < 3) throw ValidationError("merge directive needs pairs: " + line);
            std::string pairs;
            for (size_t t = 2; t < tok.size(); ++t) pairs += tok[t];  // allow spaces after commas
            for (auto& pair : split(pairs, ',')) {
                const auto eq = pair.find('=');
                if (eq == std::string::npos || eq == 0 || eq + 1 == pair.size())
                    throw ValidationError("bad merge pair '" + pair + "' in: " + line);
                d.merge_map.emplace_back(pair.substr(0, eq), pair.substr(eq + 1));
            }
        } else {
            throw ValidationError("unknown directive kind '" + tok[1] + "'");
        }
        out[col] = d;
    }
    return out;
}

// ---------------------------------------------------------------------------
// raw delimited table, first line = header; tab if the header has one, else comma
// ---------------------------------------------------------------------------

struct RawTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline RawTable parse_table(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw ValidationError("table is empty (no header)");
    const char delim = lines[0].find('\t') != std::string::npos ? '\t' : ',';
    RawTable t;
    t.header = split(lines[0], delim);
    for (auto& h : t.header) h = trim(h);
    for (size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        auto cells = split(lines[i], delim);
        if (cells.size() != t.header.size())
            throw ValidationError("row " + std::to_string(i) + " has " + std::to_string(cells.size()) +
                                  " cells, expected " + std::to_string(t.header.size()));
        for (auto& c : cells) c = trim(c);
        t.rows.push_back(std::move(cells));
    }
    return t;
}

inline CategoricalSchema infer_schema(const RawTable& table,
                                      const std::map<std::string, ColumnDirective>& directives) {
    for (const auto& [col, d] : directives) {
        (void)d;
        if (std::find(table.header.begin(), table.header.end(), col) == table.header.end())
            throw ValidationError("directive names unknown column '" + col + "'");
    }
    CategoricalSchema schema;
    for (size_t c = 0; c < table.header.size(); ++c) {
        const std::string& col = table.header[c];
        ColumnDirective dir;  // default categorical
        if (auto it = directives.find(col); it != directives.end()) dir = it->second;

        QuestionSpec q;
        q.name = col;
        q.kind = dir.kind;
        if (table.rows.empty()) throw ValidationError("column '" + col + "' is empty (table has no rows)");

        switch (dir.kind) {
            case QuestionKind::categorical: {
                for (const auto& row : table.rows) {
                    const std::string& v = row[c];
                    if (v.empty()) throw ValidationError("column '" + col + "': empty cell");
                    if (std::find(q.categories.begin(), q.categories.end(), v) == q.categories.end())
                        q.categories.push_back(v);
                }
                break;
            }
            case QuestionKind::merged: {
                q.merge_map = dir.merge_map;
                for (const auto& [from, to] : dir.merge_map) {
                    (void)from;
                    if (std::find(q.categories.begin(), q.categories.end(), to) == q.categories.end())
                        q.categories.push_back(to);
                }
                for (const auto& row : table.rows) {
                    const std::string& v = row[c];
                    const bool mapped = std::any_of(dir.merge_map.begin(), dir.merge_map.end(),
                                                    [&](const auto& p) { return p.first == v; });
                    if (!mapped)
                        throw ValidationError("column '" + col + "': raw label '" + v +
                                              "' not covered by merge directive");
                }
                break;
            }
            case QuestionKind::quantile: {
                q.numeric_bins = dir.bins;
                q.missing_codes = dir.missing_codes;
                std::vector<double> values;
                for (const auto& row : table.rows) {
                    const std::string& v = row[c];
                    if (std::find(dir.missing_codes.begin(), dir.missing_codes.end(), v) !=
                        dir.missing_codes.end())
                        continue;
                    const auto num = parse_double(v);
                    if (!num)
                        throw ValidationError("column '" + col + "': non-numeric value '" + v +
                                              "' (not a declared missing code)");
                    values.push_back(*num);
                }
                if (values.empty())
                    throw ValidationError("column '" + col + "' is empty (no non-missing numeric values)");
                {
                    std::vector<double> sorted = values;
                    std::sort(sorted.begin(), sorted.end());
                    const size_t distinct = static_cast<size_t>(std::distance(
                        sorted.begin(), std::unique(sorted.begin(), sorted.end())));
                    if (distinct < dir.bins)
                        throw ValidationError("column '" + col + "': only " + std::to_string(distinct) +
                                              " distinct numeric values for " +
                                              std::to_string(dir.bins) + " bins");
                }
                std::sort(values.begin(), values.end());
                const size_t n = values.size();
                for (size_t k = 1; k < dir.bins; ++k) {
                    const double pos = static_cast<double>(k) / static_cast<double>(dir.bins) *
                                       static_cast<double>(n - 1);
                    q.bin_edges.push_back(values[static_cast<size_t>(pos)]);
                }
                for (size_t k = 1; k < q.bin_edges.size(); ++k)
                    if (!(q.bin_edges[k - 1] < q.bin_edges[k]))
                        throw ValidationError("column '" + col +
                                              "': duplicate quantile edges, data too concentrated for " +
                                              std::to_string(dir.bins) + " bins");
                for (size_t k = 0; k < dir.bins; ++k) q.categories.push_back("bin" + std::to_string(k));
                for (const auto& code : dir.missing_codes) q.categories.push_back(code);
                break;
            }
        }
        q.validate();
        schema.questions.push_back(std::move(q));
    }
    schema.rebuild_block_starts();
    schema.validate();
    return schema;
}

// ---------------------------------------------------------------------------
// encode / decode
// ---------------------------------------------------------------------------

inline std::vector<uint8_t> encode_row(const CategoricalSchema& schema,
                                       const std::vector<std::string>& raw_row) {
    if (raw_row.size() != schema.question_count())
        throw ValidationError("row has " + std::to_string(raw_row.size()) + " values, expected " +
                              std::to_string(schema.question_count()));
    std::vector<uint8_t> bits(schema.total_columns(), 0);
    for (size_t q = 0; q < schema.question_count(); ++q) {
        const size_t k = schema.questions[q].category_index(raw_row[q]);
        bits[schema.block_starts[q] + k] = 1;
    }
    return bits;
}

inline std::vector<std::string> decode_row(const CategoricalSchema& schema,
                                           const std::vector<uint8_t>& bits) {
    if (bits.size() != schema.total_columns())
        throw ValidationError("bit vector length mismatch");
    std::vector<std::string> out;
    out.reserve(schema.question_count());
    for (size_t q = 0; q < schema.question_count(); ++q) {
        size_t found = schema.total_columns();
        size_t ones = 0;
        for (size_t i = schema.block_starts[q]; i < schema.block_starts[q + 1]; ++i) {
            if (bits[i]) {
                ++ones;
                found = i - schema.block_starts[q];
            }
        }
        if (ones != 1)
            throw ValidationError("block " + std::to_string(q) + " has " + std::to_string(ones) +
                                  " ones, expected exactly 1");
        out.push_back(schema.questions[q].categories[found]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// serialization: versioned line-oriented text, byte-stable for fixed input
// ---------------------------------------------------------------------------

inline std::string serialize_schema(const CategoricalSchema& schema) {
    std::string out = "modp-schema v1\n";
    out += "questions " + std::to_string(schema.question_count()) + "\n";
    for (const auto& q : schema.questions) {
        out += "question " + q.name + "\n";
        out += "kind " + std::string(kind_name(q.kind)) + "\n";
        if (q.kind == QuestionKind::quantile) {
            out += "bins " + std::to_string(q.numeric_bins) + "\n";
            for (double e : q.bin_edges) out += "edge " + fmt_double(e) + "\n";
            for (const auto& m : q.missing_codes) out += "missing " + m + "\n";
        }
        if (q.kind == QuestionKind::merged) {
            for (const auto& [from, to] : q.merge_map) out += "map " + from + "\t" + to + "\n";
        }
        for (const auto& c : q.categories) out += "cat " + c + "\n";
        out += "end\n";
    }
    out += "block_starts";
    for (size_t b : schema.block_starts) out += " " + std::to_string(b);
    out += "\nend\n";
    return out;
}

inline CategoricalSchema parse_schema(const std::string& text) {
    const auto lines = split_lines(text);
    size_t i = 0;
    auto need = [&](const char* what) -> const std::string& {
        if (i >= lines.size()) throw ValidationError(std::string("schema file truncated, expected ") + what);
        return lines[i];
    };
    if (trim(need("header")) != "modp-schema v1")
        throw ValidationError("schema file: unsupported format/version (want 'modp-schema v1')");
    ++i;
    const auto qtok = tokenize(need("questions count"));
    if (qtok.size() != 2 || qtok[0] != "questions") throw ValidationError("schema file: bad questions line");
    const size_t qcount = static_cast<size_t>(*parse_int(qtok[1]));
    ++i;

    CategoricalSchema schema;
    for (size_t qi = 0; qi < qcount; ++qi) {
        QuestionSpec q;
        {
            const std::string& line = need("question");
            if (line.rfind("question ", 0) != 0) throw ValidationError("schema file: expected question line");
            q.name = trim(line.substr(9));
            ++i;
        }
        for (;;) {
            const std::string& line = need("question body");
            ++i;
            if (line == "end") break;
            if (line.rfind("kind ", 0) == 0) {
                const std::string k = trim(line.substr(5));
                if (k == "categorical") q.kind = QuestionKind::categorical;
                else if (k == "quantile") q.kind = QuestionKind::quantile;
                else if (k == "merged") q.kind = QuestionKind::merged;
                else throw ValidationError("schema file: unknown kind '" + k + "'");
            } else if (line.rfind("bins ", 0) == 0) {
                q.numeric_bins = static_cast<size_t>(*parse_int(line.substr(5)));
            } else if (line.rfind("edge ", 0) == 0) {
                const auto v = parse_double(line.substr(5));
                if (!v) throw ValidationError("schema file: bad edge value");
                q.bin_edges.push_back(*v);
            } else if (line.rfind("missing ", 0) == 0) {
                q.missing_codes.push_back(trim(line.substr(8)));
            } else if (line.rfind("map ", 0) == 0) {
                const auto tab = line.find('\t', 4);
                if (tab == std::string::npos) throw ValidationError("schema file: bad map line");
                q.merge_map.emplace_back(line.substr(4, tab - 4), line.substr(tab + 1));
            } else if (line.rfind("cat ", 0) == 0) {
                q.categories.push_back(line.substr(4));
            } else {
                throw ValidationError("schema file: unexpected line '" + line + "'");
            }
        }
        schema.questions.push_back(std::move(q));
    }
    {
        const std::string& line = need("block_starts");
        const auto tok = tokenize(line);
        if (tok.empty() || tok[0] != "block_starts") throw ValidationError("schema file: missing block_starts");
        for (size_t t = 1; t < tok.size(); ++t)
            schema.block_starts.push_back(static_cast<size_t>(*parse_int(tok[t])));
        ++i;
    }
    schema.validate();
    return schema;
}

} // namespace modp
