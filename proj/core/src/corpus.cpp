#include "protospace/corpus.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "protospace/errors.hpp"

namespace protospace {

using nlohmann::json;

// --- RatingsTable ------------------------------------------------------------

void RatingsTable::add(const std::string& item, const std::string& dimension,
                       double rating) {
    if (!std::isfinite(rating)) {
        throw SchemaError("ratings: non-finite rating for (" + item + ", " +
                          dimension + ")");
    }
    const auto key = std::make_pair(item, dimension);
    if (index_.count(key)) {
        throw SchemaError("ratings: duplicate entry for (" + item + ", " +
                          dimension + ")");
    }
    index_.emplace(key, rows_.size());
    rows_.push_back(Row{item, dimension, rating});
}

std::optional<double> RatingsTable::rating(const std::string& item,
                                           const std::string& dimension) const {
    const auto it = index_.find(std::make_pair(item, dimension));
    if (it == index_.end()) return std::nullopt;
    return rows_[it->second].rating;
}

std::vector<std::string> RatingsTable::dimensions() const {
    std::set<std::string> seen;
    for (const auto& row : rows_) seen.insert(row.dimension);
    return std::vector<std::string>(seen.begin(), seen.end());
}

std::vector<RatingsTable::Row> RatingsTable::rows_for(
    const std::string& dimension) const {
    std::vector<Row> out;
    for (const auto& row : rows_) {
        if (row.dimension == dimension) out.push_back(row);
    }
    std::sort(out.begin(), out.end(),
              [](const Row& a, const Row& b) { return a.item < b.item; });
    return out;
}

// --- EmbeddingStore ----------------------------------------------------------

void EmbeddingStore::add(EmbeddingRecord rec) {
    if (rec.vector.dim() == 0) {
        throw DimensionError("store: empty vector for id '" + rec.id + "'");
    }
    if (index_.count(rec.id)) {
        throw SchemaError("store: duplicate id '" + rec.id + "'");
    }
    if (dim_ == 0) {
        dim_ = rec.vector.dim();
    } else if (rec.vector.dim() != dim_) {
        throw DimensionError("store: id '" + rec.id + "' has dim " +
                             std::to_string(rec.vector.dim()) +
                             ", store holds dim " + std::to_string(dim_));
    }
    index_.emplace(rec.id, records_.size());
    records_.push_back(std::move(rec));
}

void EmbeddingStore::merge(const EmbeddingStore& other) {
    for (const auto& rec : other.records()) add(rec);
}

bool EmbeddingStore::contains(const std::string& id) const {
    return index_.count(id) != 0;
}

const EmbeddingRecord* EmbeddingStore::find(const std::string& id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? nullptr : &records_[it->second];
}

const EmbeddingVector& EmbeddingStore::vector_for(const std::string& id) const {
    const EmbeddingRecord* rec = find(id);
    if (!rec) throw LookupError("store: no embedding for id '" + id + "'");
    return rec->vector;
}

// --- verbalization -----------------------------------------------------------

std::string verbalize_entity(const std::string& name,
                             const std::optional<std::string>& category) {
    if (name.empty()) throw InputError("verbalize_entity: empty name");
    if (category && !category->empty()) return *category + " " + name;
    return name;
}

std::string eol_prompt(const std::string& phrase) {
    if (phrase.empty()) throw InputError("eol_prompt: empty phrase");
    return "The description of the term '" + phrase + "' in one word is";
}

// --- JSONL embeddings --------------------------------------------------------

EmbeddingStore load_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embeddings file: " + path);

    EmbeddingStore store;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        const json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded() || !j.is_object()) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": malformed JSON record");
        }
        if (!j.contains("id") || !j["id"].is_string() || !j.contains("text") ||
            !j["text"].is_string() || !j.contains("vector") ||
            !j["vector"].is_array()) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": record needs string id, string text, array vector");
        }
        EmbeddingRecord rec;
        rec.id = j["id"].get<std::string>();
        rec.text = j["text"].get<std::string>();
        rec.vector.values.reserve(j["vector"].size());
        for (const auto& x : j["vector"]) {
            if (!x.is_number()) {
                throw ParseError(path + ":" + std::to_string(line_no) +
                                 ": non-numeric vector entry");
            }
            rec.vector.values.push_back(x.get<double>());
        }
        if (rec.vector.dim() == 0) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": empty vector");
        }
        store.add(std::move(rec));  // SchemaError / DimensionError propagate
    }
    return store;
}

void save_embeddings(const EmbeddingStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write embeddings file: " + path);
    for (const auto& rec : store.records()) {
        json j;
        j["id"] = rec.id;
        j["text"] = rec.text;
        j["vector"] = rec.vector.values;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed while writing embeddings file: " + path);
}

// --- classification dataset --------------------------------------------------

void validate_classification_item(const ClassificationItem& item, bool relax) {
    if (item.target.empty()) {
        throw SchemaError("classification: record with empty target");
    }
    const std::size_t min_examples = relax ? 2 : 7;
    const std::size_t min_negatives = relax ? 1 : 4;
    if (item.examples.size() < min_examples ||
        (!relax && item.examples.size() != 7)) {
        throw SchemaError("classification: record '" + item.target + "' has " +
                          std::to_string(item.examples.size()) +
                          " examples, expected " + (relax ? ">=2" : "exactly 7"));
    }
    if (item.negatives.size() < min_negatives ||
        (!relax && item.negatives.size() != 4)) {
        throw SchemaError("classification: record '" + item.target + "' has " +
                          std::to_string(item.negatives.size()) +
                          " negatives, expected " + (relax ? ">=1" : "exactly 4"));
    }
    std::set<std::string> seen{item.target};
    for (const auto& s : item.examples) {
        if (s.empty() || !seen.insert(s).second) {
            throw SchemaError("classification: record '" + item.target +
                              "' repeats or blanks string '" + s + "'");
        }
    }
    for (const auto& s : item.negatives) {
        if (s.empty() || !seen.insert(s).second) {
            throw SchemaError("classification: record '" + item.target +
                              "' repeats or blanks string '" + s + "'");
        }
    }
}

std::vector<ClassificationItem> load_classification_dataset(
    const std::string& path, bool relax) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open classification file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();

    const json root = json::parse(buf.str(), nullptr, /*allow_exceptions=*/false);
    if (root.is_discarded() || !root.is_array()) {
        throw ParseError(path + ": expected a JSON array of records");
    }

    std::vector<ClassificationItem> items;
    items.reserve(root.size());
    for (std::size_t i = 0; i < root.size(); ++i) {
        const json& j = root[i];
        if (!j.is_object() || !j.contains("target") || !j["target"].is_string() ||
            !j.contains("examples") || !j["examples"].is_array() ||
            !j.contains("negatives") || !j["negatives"].is_array()) {
            throw SchemaError(path + ": record " + std::to_string(i) +
                              " needs target, examples[], negatives[]");
        }
        ClassificationItem item;
        item.target = j["target"].get<std::string>();
        for (const auto& e : j["examples"]) {
            if (!e.is_string()) {
                throw SchemaError(path + ": record '" + item.target +
                                  "' has a non-string example");
            }
            item.examples.push_back(e.get<std::string>());
        }
        for (const auto& n : j["negatives"]) {
            if (!n.is_string()) {
                throw SchemaError(path + ": record '" + item.target +
                                  "' has a non-string negative");
            }
            item.negatives.push_back(n.get<std::string>());
        }
        if (j.contains("category")) {
            if (!j["category"].is_string()) {
                throw SchemaError(path + ": record '" + item.target +
                                  "' has a non-string category");
            }
            item.category = j["category"].get<std::string>();
        }
        validate_classification_item(item, relax);
        if (relax && (item.examples.size() != 7 || item.negatives.size() != 4)) {
            std::fprintf(stderr,
                         "warning: classification record '%s' relaxed to %zu "
                         "examples / %zu negatives\n",
                         item.target.c_str(), item.examples.size(),
                         item.negatives.size());
        }
        items.push_back(std::move(item));
    }
    return items;
}

// --- CSV ---------------------------------------------------------------------

namespace {

// RFC-4180-ish: quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line,
                                        const std::string& path,
                                        std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            if (!cur.empty()) {
                throw ParseError(path + ":" + std::to_string(line_no) +
                                 ": stray quote inside unquoted field");
            }
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (quoted) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": unterminated quoted field");
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\"\"";
        else out.push_back(ch);
    }
    out += "\"";
    return out;
}

double parse_double_field(const std::string& field, const std::string& path,
                          std::size_t line_no) {
    double value = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": expected a number, got '" + field + "'");
    }
    return value;
}

// Reads all lines, validates the header, returns data rows with line numbers.
std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv(
    const std::string& path, const std::string& expected_header,
    std::size_t n_fields) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open CSV file: " + path);

    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != expected_header) {
                throw SchemaError(path + ": expected header '" +
                                  expected_header + "', got '" + line + "'");
            }
            saw_header = true;
            continue;
        }
        auto fields = split_csv_line(line, path, line_no);
        if (fields.size() != n_fields) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(n_fields) + " fields, got " +
                             std::to_string(fields.size()));
        }
        rows.emplace_back(line_no, std::move(fields));
    }
    if (!saw_header) throw SchemaError(path + ": missing header row");
    return rows;
}

}  // namespace

RatingsTable load_ratings(const std::string& path) {
    RatingsTable table;
    for (const auto& [line_no, f] : read_csv(path, "item,dimension,rating", 3)) {
        const double rating = parse_double_field(f[2], path, line_no);
        if (f[0].empty() || f[1].empty()) {
            throw SchemaError(path + ":" + std::to_string(line_no) +
                              ": empty item or dimension");
        }
        table.add(f[0], f[1], rating);  // SchemaError on duplicates
    }
    return table;
}

std::vector<RankPair> load_pairs(const std::string& path) {
    std::vector<RankPair> pairs;
    for (const auto& [line_no, f] :
         read_csv(path, "item_a,item_b,dimension,label", 4)) {
        if (f[0].empty() || f[1].empty() || f[2].empty()) {
            throw SchemaError(path + ":" + std::to_string(line_no) +
                              ": empty item or dimension");
        }
        if (f[0] == f[1]) {
            throw SchemaError(path + ":" + std::to_string(line_no) +
                              ": item_a equals item_b ('" + f[0] + "')");
        }
        int label = 0;
        const char* begin = f[3].data();
        const char* end = begin + f[3].size();
        const char* start = (*begin == '+') ? begin + 1 : begin;
        const auto res = std::from_chars(start, end, label);
        if (res.ec != std::errc{} || res.ptr != end) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected an integer label, got '" + f[3] + "'");
        }
        if (label != 1 && label != -1) {
            throw SchemaError(path + ":" + std::to_string(line_no) +
                              ": label must be +1 or -1, got " + f[3]);
        }
        pairs.push_back(RankPair{f[0], f[1], f[2], label});
    }
    return pairs;
}

void save_pairs(const std::vector<RankPair>& pairs, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write pairs file: " + path);
    out << "item_a,item_b,dimension,label\n";
    for (const auto& p : pairs) {
        out << csv_quote(p.item_a) << ',' << csv_quote(p.item_b) << ','
            << csv_quote(p.dimension) << ',' << p.label << '\n';
    }
    if (!out) throw IoError("failed while writing pairs file: " + path);
}

}  // namespace protospace
