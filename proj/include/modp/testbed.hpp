#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "modp/error.hpp"
#include "modp/rng.hpp"
#include "modp/schema.hpp"
#include "modp/text.hpp"

namespace modp {

// A mixture of subpopulations, each with its own directed acyclic
// conditional structure over a shared question set. Used to generate
// survey-like tables with known ground truth.
//
// Spec text format (line oriented, '#' comments):
//   rows 50000
//   question AGE 4
//   question WORK 3
//   subpop early 0.5
//   given AGE : 0.4 0.3 0.2 0.1
//   given WORK AGE : 0.8 0.1 0.1 / 0.6 0.3 0.1 / 0.3 0.4 0.3 / 0.1 0.2 0.7
// A `given` line attaches to the most recent subpop; its probability rows
// (separated by '/') cover every parent-category combination in odometer
// order with the LAST listed parent varying fastest. Questions without a
// `given` line in a subpop are uniform there.

struct ConditionalTable {
    std::vector<size_t> parents;   // question indices
    std::vector<double> probs;     // (#parent combos) x ncats, row-major, normalized
};

struct Subpopulation {
    std::string name;
    double weight = 0;
    std::map<size_t, ConditionalTable> conditionals;  // question index -> table
};

struct PopulationSpec {
    size_t rows = 0;
    std::vector<std::string> question_names;
    std::vector<size_t> category_counts;
    std::vector<Subpopulation> subpops;

    size_t question_index(const std::string& name) const {
        for (size_t q = 0; q < question_names.size(); ++q)
            if (question_names[q] == name) return q;
        throw ValidationError("population spec: unknown question '" + name + "'");
    }
};

namespace detail {

// Kahn topological sort of the questions of one subpop; throws on a cycle.
inline std::vector<size_t> topo_order(const Subpopulation& sp, size_t nq) {
    std::vector<std::vector<size_t>> children(nq);
    std::vector<size_t> indegree(nq, 0);
    for (const auto& [q, table] : sp.conditionals) {
        indegree[q] = table.parents.size();
        for (size_t p : table.parents) children[p].push_back(q);
    }
    std::vector<size_t> ready, order;
    for (size_t q = 0; q < nq; ++q)
        if (indegree[q] == 0) ready.push_back(q);
    while (!ready.empty()) {
        const size_t q = ready.back();
        ready.pop_back();
        order.push_back(q);
        for (size_t c : children[q])
            if (--indegree[c] == 0) ready.push_back(c);
    }
    if (order.size() != nq)
        throw ValidationError("population spec: cyclic dependency in subpop '" + sp.name + "'");
    return order;
}

inline void normalize_rows(std::vector<double>& probs, size_t ncats, const std::string& where) {
    for (size_t off = 0; off < probs.size(); off += ncats) {
        double total = 0;
        for (size_t i = 0; i < ncats; ++i) {
            if (probs[off + i] < 0)
                throw ValidationError("population spec: negative probability in " + where);
            total += probs[off + i];
        }
        if (total <= 0)
            throw ValidationError("population spec: all-zero probability row in " + where);
        for (size_t i = 0; i < ncats; ++i) probs[off + i] /= total;
    }
}

} // namespace detail

inline PopulationSpec parse_population_spec(const std::string& text) {
    PopulationSpec spec;
    for (const std::string& raw : split_lines(text)) {
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto tok = tokenize(line);
        if (tok[0] == "rows") {
            if (tok.size() != 2) throw ValidationError("population spec: bad rows line");
            const auto n = parse_int(tok[1]);
            if (!n || *n <= 0) throw ValidationError("population spec: bad row count");
            spec.rows = static_cast<size_t>(*n);
        } else if (tok[0] == "question") {
            if (tok.size() != 3) throw ValidationError("population spec: bad question line");
            const auto k = parse_int(tok[2]);
            if (!k || *k < 2) throw ValidationError("population spec: question needs >= 2 categories");
            spec.question_names.push_back(tok[1]);
            spec.category_counts.push_back(static_cast<size_t>(*k));
        } else if (tok[0] == "subpop") {
            if (tok.size() != 3) throw ValidationError("population spec: bad subpop line");
            const auto w = parse_double(tok[2]);
            if (!w || *w <= 0) throw ValidationError("population spec: subpop weight must be > 0");
            spec.subpops.push_back({tok[1], *w, {}});
        } else if (tok[0] == "given") {
            if (spec.subpops.empty())
                throw ValidationError("population spec: 'given' before any subpop");
            const size_t colon = line.find(':');
            if (colon == std::string::npos)
                throw ValidationError("population spec: 'given' line missing ':'");
            const auto head = tokenize(line.substr(5, colon - 5));
            if (head.empty()) throw ValidationError("population spec: 'given' missing question");
            const size_t q = spec.question_index(head[0]);
            ConditionalTable table;
            for (size_t i = 1; i < head.size(); ++i) {
                const size_t p = spec.question_index(head[i]);
                if (p == q)
                    throw ValidationError("population spec: question '" + head[0] +
                                          "' conditioned on itself");
                table.parents.push_back(p);
            }
            size_t combos = 1;
            for (size_t p : table.parents) combos *= spec.category_counts[p];
            const size_t ncats = spec.category_counts[q];
            for (const std::string& part : split(line.substr(colon + 1), '/'))
                for (const std::string& cell : tokenize(part)) {
                    const auto v = parse_double(cell);
                    if (!v) throw ValidationError("population spec: bad probability '" + cell + "'");
                    table.probs.push_back(*v);
                }
            if (table.probs.size() != combos * ncats)
                throw ValidationError("population spec: '" + head[0] + "' expects " +
                                      std::to_string(combos * ncats) + " probabilities, got " +
                                      std::to_string(table.probs.size()));
            detail::normalize_rows(table.probs, ncats, "'" + head[0] + "'");
            auto& sp = spec.subpops.back();
            if (sp.conditionals.count(q))
                throw ValidationError("population spec: duplicate 'given' for '" + head[0] +
                                      "' in subpop '" + sp.name + "'");
            sp.conditionals[q] = std::move(table);
        } else {
            throw ValidationError("population spec: unknown line '" + line + "'");
        }
    }
    if (spec.rows == 0) throw ValidationError("population spec: missing rows line");
    if (spec.question_names.empty()) throw ValidationError("population spec: no questions");
    if (spec.subpops.empty()) throw ValidationError("population spec: no subpopulations");
    double total = 0;
    for (const auto& sp : spec.subpops) total += sp.weight;
    for (auto& sp : spec.subpops) sp.weight /= total;
    for (const auto& sp : spec.subpops) detail::topo_order(sp, spec.question_names.size());
    return spec;
}

struct TestbedData {
    RawTable table;                    // category labels are "c0".."c{k-1}"
    std::vector<std::string> subpop;   // generator label per row
};

// Sample rows r = 0..N-1: draw the subpopulation from substream (r, 0),
// then each question in dependency order from substream (r, 1 + question).
// Keying draws by question index (not topo position) keeps a question's
// stream stable across spec edits that only reorder independent questions.
inline TestbedData generate_testbed(const PopulationSpec& spec, uint64_t seed) {
    const size_t nq = spec.question_names.size();
    std::vector<std::vector<size_t>> orders;
    orders.reserve(spec.subpops.size());
    for (const auto& sp : spec.subpops) orders.push_back(detail::topo_order(sp, nq));

    TestbedData data;
    data.table.header = spec.question_names;
    data.table.rows.reserve(spec.rows);
    data.subpop.reserve(spec.rows);

    std::vector<size_t> cats(nq);
    for (size_t r = 0; r < spec.rows; ++r) {
        double u = substream(seed, StreamTag::testbed, r, 0).next_double();
        size_t s = spec.subpops.size() - 1;
        double cum = 0;
        for (size_t i = 0; i < spec.subpops.size(); ++i) {
            cum += spec.subpops[i].weight;
            if (u < cum) {
                s = i;
                break;
            }
        }
        const auto& sp = spec.subpops[s];

        for (size_t q : orders[s]) {
            const size_t ncats = spec.category_counts[q];
            const double* row = nullptr;
            std::vector<double> uniform;
            const auto it = sp.conditionals.find(q);
            if (it == sp.conditionals.end()) {
                uniform.assign(ncats, 1.0 / static_cast<double>(ncats));
                row = uniform.data();
            } else {
                size_t combo = 0;
                for (size_t p : it->second.parents)
                    combo = combo * spec.category_counts[p] + cats[p];
                row = it->second.probs.data() + combo * ncats;
            }
            const double v = substream(seed, StreamTag::testbed, r, 1 + q).next_double();
            size_t chosen = ncats - 1;
            double c = 0;
            for (size_t i = 0; i < ncats; ++i) {
                c += row[i];
                if (v < c) {
                    chosen = i;
                    break;
                }
            }
            cats[q] = chosen;
        }

        std::vector<std::string> cells(nq);
        for (size_t q = 0; q < nq; ++q) cells[q] = "c" + std::to_string(cats[q]);
        data.table.rows.push_back(std::move(cells));
        data.subpop.push_back(sp.name);
    }
    return data;
}

inline std::string serialize_table(const RawTable& table) {
    std::string out;
    for (size_t c = 0; c < table.header.size(); ++c) {
        if (c) out += "\t";
        out += table.header[c];
    }
    out += "\n";
    for (const auto& row : table.rows) {
        for (size_t c = 0; c < row.size(); ++c) {
            if (c) out += "\t";
            out += row[c];
        }
        out += "\n";
    }
    return out;
}

// The normalized ground truth actually sampled from, for later analysis.
inline std::string serialize_ground_truth(const PopulationSpec& spec, uint64_t seed) {
    std::string out = "# modp-population-truth v1\n# seed " + std::to_string(seed) + "\n";
    out += "rows " + std::to_string(spec.rows) + "\n";
    for (size_t q = 0; q < spec.question_names.size(); ++q)
        out += "question " + spec.question_names[q] + " " +
               std::to_string(spec.category_counts[q]) + "\n";
    for (const auto& sp : spec.subpops) {
        out += "subpop " + sp.name + " " + fmt_double(sp.weight) + "\n";
        for (const auto& [q, table] : sp.conditionals) {
            out += "given " + spec.question_names[q];
            for (size_t p : table.parents) out += " " + spec.question_names[p];
            out += " :";
            const size_t ncats = spec.category_counts[q];
            for (size_t off = 0; off < table.probs.size(); off += ncats) {
                if (off) out += " /";
                for (size_t i = 0; i < ncats; ++i) out += " " + fmt_double(table.probs[off + i]);
            }
            out += "\n";
        }
    }
    return out;
}

inline std::string serialize_subpop_labels(const TestbedData& data, uint64_t seed) {
    std::string out = "# modp-subpop-labels v1\n# seed " + std::to_string(seed) + "\n";
    for (const auto& s : data.subpop) out += s + "\n";
    return out;
}

} // namespace modp
