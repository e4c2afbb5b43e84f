#include "mdann/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mdann/errors.hpp"

namespace mdann {

char status_token(CuiStatus s) {
    switch (s) {
        case CuiStatus::Present: return 'P';
        case CuiStatus::Negated: return 'N';
        case CuiStatus::Missing: return 'M';
    }
    throw ConfigError("unknown status enum value");
}

CuiStatus status_from_token(char token) {
    switch (token) {
        case 'P': return CuiStatus::Present;
        case 'N': return CuiStatus::Negated;
        case 'M': return CuiStatus::Missing;
        default:
            throw SchemaError(std::string("unknown status token '") + token + "'");
    }
}

bool Dataset::has_site(const std::string& er_id) const {
    return std::find(site_registry.begin(), site_registry.end(), er_id) != site_registry.end();
}

void Dataset::validate() const {
    std::unordered_set<std::string> vocab_seen;
    for (const auto& v : vocabulary) {
        if (!vocab_seen.insert(v).second) throw SchemaError("duplicate vocabulary entry: " + v);
    }
    std::unordered_set<std::string> sites(site_registry.begin(), site_registry.end());
    if (sites.size() != site_registry.size()) throw SchemaError("duplicate site in registry");
    std::unordered_set<std::string> ids;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.statuses.size() != vocabulary.size()) {
            throw SchemaError("record " + r.encounter_id + " has " +
                              std::to_string(r.statuses.size()) + " statuses, expected " +
                              std::to_string(vocabulary.size()));
        }
        if (r.label != 0 && r.label != 1) {
            throw SchemaError("record " + r.encounter_id + " label must be 0 or 1");
        }
        if (!sites.count(r.er_id)) {
            throw SchemaError("record " + r.encounter_id + " site " + r.er_id +
                              " missing from registry");
        }
        if (!ids.insert(r.encounter_id).second) {
            throw SchemaError("duplicate encounter_id " + r.encounter_id);
        }
    }
}

namespace {

constexpr std::int32_t kDaysPerEra = 146097;

// Howard Hinnant's civil-date algorithms.
std::int32_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const int yoe = y - era * 400;
    const int doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int32_t>(era) * kDaysPerEra + doe - 719468;
}

void civil_from_days(std::int32_t z, int& y, int& m, int& d) {
    z += 719468;
    const int era = (z >= 0 ? z : z - kDaysPerEra + 1) / kDaysPerEra;
    const int doe = z - era * kDaysPerEra;
    const int yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = yoe + era * 400;
    const int doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const int mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y += m <= 2;
}

bool leap_year(int y) { return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0); }

int days_in_month(int y, int m) {
    static const int lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && leap_year(y)) return 29;
    return lengths[m - 1];
}

}  // namespace

std::int32_t parse_date(const std::string& iso) {
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
        throw SchemaError("bad date '" + iso + "', expected YYYY-MM-DD");
    }
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
        if (iso[i] < '0' || iso[i] > '9') {
            throw SchemaError("bad date '" + iso + "', expected YYYY-MM-DD");
        }
    }
    const int y = std::stoi(iso.substr(0, 4));
    const int m = std::stoi(iso.substr(5, 2));
    const int d = std::stoi(iso.substr(8, 2));
    if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, m)) {
        throw SchemaError("bad calendar date '" + iso + "'");
    }
    return days_from_civil(y, m, d);
}

std::string format_date(std::int32_t days) {
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
}

EncodedBatch encode(const std::vector<EncounterRecord>& records,
                    const std::vector<std::string>& vocabulary) {
    const std::size_t v = vocabulary.size();
    EncodedBatch batch;
    batch.x = Matrix(records.size(), 3 * v);
    batch.y.reserve(records.size());
    batch.row_meta.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.statuses.size() != v) {
            throw SchemaError("record " + r.encounter_id + " has " +
                              std::to_string(r.statuses.size()) + " statuses, expected " +
                              std::to_string(v));
        }
        auto row = batch.x.row(i);
        for (std::size_t c = 0; c < v; ++c) {
            row[3 * c + static_cast<std::size_t>(r.statuses[c])] = 1.0;
        }
        batch.y.push_back(r.label);
        batch.row_meta.push_back(r.encounter_id);
    }
    return batch;
}

std::vector<CuiStatus> decode_row(std::span<const double> row) {
    if (row.size() % 3 != 0) throw ShapeError("decode_row: row length not a multiple of 3");
    std::vector<CuiStatus> statuses(row.size() / 3);
    for (std::size_t c = 0; c < statuses.size(); ++c) {
        int hot = -1;
        for (int k = 0; k < 3; ++k) {
            if (row[3 * c + k] == 1.0) {
                if (hot >= 0) throw SchemaError("decode_row: triple is not one-hot");
                hot = k;
            } else if (row[3 * c + k] != 0.0) {
                throw SchemaError("decode_row: entries must be 0 or 1");
            }
        }
        if (hot < 0) throw SchemaError("decode_row: triple is not one-hot");
        statuses[c] = static_cast<CuiStatus>(hot);
    }
    return statuses;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

void register_site(Dataset& ds, std::unordered_set<std::string>& seen, const std::string& er) {
    if (seen.insert(er).second) ds.site_registry.push_back(er);
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IngestError(path + ": missing header row");
    auto header = split_csv_line(line);
    if (header.size() < 4 || header[0] != "encounter_id" || header[1] != "er_id" ||
        header[2] != "date" || header[3] != "label") {
        throw IngestError(path + ": header must start with encounter_id,er_id,date,label");
    }
    Dataset ds;
    ds.vocabulary.assign(header.begin() + 4, header.end());
    std::unordered_set<std::string> sites_seen;
    std::unordered_set<std::string> ids_seen;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw IngestError(path + ": row " + std::to_string(row) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(header.size()));
        }
        EncounterRecord r;
        r.encounter_id = fields[0];
        r.er_id = fields[1];
        try {
            r.date = parse_date(fields[2]);
        } catch (const SchemaError& e) {
            throw IngestError(path + ": row " + std::to_string(row) + ": " + e.what());
        }
        if (fields[3] != "0" && fields[3] != "1") {
            throw IngestError(path + ": row " + std::to_string(row) + ": label must be 0 or 1");
        }
        r.label = fields[3] == "1";
        r.statuses.reserve(ds.vocabulary.size());
        for (std::size_t c = 4; c < fields.size(); ++c) {
            if (fields[c].size() != 1) {
                throw IngestError(path + ": row " + std::to_string(row) +
                                  ": bad status token '" + fields[c] + "'");
            }
            try {
                r.statuses.push_back(status_from_token(fields[c][0]));
            } catch (const SchemaError& e) {
                throw IngestError(path + ": row " + std::to_string(row) + ": " + e.what());
            }
        }
        if (!ids_seen.insert(r.encounter_id).second) {
            throw IngestError(path + ": row " + std::to_string(row) + ": duplicate encounter_id " +
                              r.encounter_id);
        }
        register_site(ds, sites_seen, r.er_id);
        ds.records.push_back(std::move(r));
    }
    ds.validate();
    return ds;
}

Dataset load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IngestError(path + ": missing header line");
    Dataset ds;
    try {
        auto header = nlohmann::json::parse(line);
        ds.vocabulary = header.at("vocabulary").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw IngestError(path + ": row 1: bad header: " + e.what());
    }
    std::unordered_set<std::string> sites_seen;
    std::unordered_set<std::string> ids_seen;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        EncounterRecord r;
        try {
            auto j = nlohmann::json::parse(line);
            r.encounter_id = j.at("encounter_id").get<std::string>();
            r.er_id = j.at("er_id").get<std::string>();
            r.date = parse_date(j.at("date").get<std::string>());
            r.label = j.at("label").get<int>();
            const auto statuses = j.at("statuses").get<std::string>();
            if (statuses.size() != ds.vocabulary.size()) {
                throw IngestError(path + ": row " + std::to_string(row) + ": statuses length " +
                                  std::to_string(statuses.size()) + ", expected " +
                                  std::to_string(ds.vocabulary.size()));
            }
            for (char c : statuses) r.statuses.push_back(status_from_token(c));
        } catch (const IngestError&) {
            throw;
        } catch (const std::exception& e) {
            throw IngestError(path + ": row " + std::to_string(row) + ": " + e.what());
        }
        if (r.label != 0 && r.label != 1) {
            throw IngestError(path + ": row " + std::to_string(row) + ": label must be 0 or 1");
        }
        if (!ids_seen.insert(r.encounter_id).second) {
            throw IngestError(path + ": row " + std::to_string(row) + ": duplicate encounter_id " +
                              r.encounter_id);
        }
        register_site(ds, sites_seen, r.er_id);
        ds.records.push_back(std::move(r));
    }
    ds.validate();
    return ds;
}

}  // namespace

Dataset load_dataset(const std::string& path, DatasetFormat format) {
    return format == DatasetFormat::Csv ? load_csv(path) : load_jsonl(path);
}

void save_dataset(const Dataset& ds, const std::string& path, DatasetFormat format) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    if (format == DatasetFormat::Csv) {
        out << "encounter_id,er_id,date,label";
        for (const auto& v : ds.vocabulary) out << ',' << v;
        out << '\n';
        for (const auto& r : ds.records) {
            out << r.encounter_id << ',' << r.er_id << ',' << format_date(r.date) << ','
                << r.label;
            for (CuiStatus s : r.statuses) out << ',' << status_token(s);
            out << '\n';
        }
    } else {
        out << nlohmann::json{{"vocabulary", ds.vocabulary}}.dump() << '\n';
        for (const auto& r : ds.records) {
            std::string statuses;
            statuses.reserve(r.statuses.size());
            for (CuiStatus s : r.statuses) statuses.push_back(status_token(s));
            out << nlohmann::json{{"encounter_id", r.encounter_id},
                                  {"er_id", r.er_id},
                                  {"date", format_date(r.date)},
                                  {"label", r.label},
                                  {"statuses", statuses}}
                       .dump()
                << '\n';
        }
    }
    if (!out.good()) throw IoError("write failed for " + path);
}

std::pair<Dataset, Dataset> temporal_split(const Dataset& ds, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw ConfigError("train_fraction must be in (0, 1)");
    }
    ds.validate();

    std::unordered_map<std::string, std::vector<std::size_t>> per_site;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        per_site[ds.records[i].er_id].push_back(i);
    }

    std::unordered_set<std::string> train_ids;
    for (const auto& site : ds.site_registry) {
        auto& idx = per_site[site];
        if (idx.size() < 2) {
            throw SplitError("site " + site + " has fewer than 2 records");
        }
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const auto& ra = ds.records[a];
            const auto& rb = ds.records[b];
            if (ra.date != rb.date) return ra.date < rb.date;
            return ra.encounter_id < rb.encounter_id;
        });
        std::size_t k = static_cast<std::size_t>(
            std::floor(spec.train_fraction * static_cast<double>(idx.size())));
        if (k >= idx.size()) k = idx.size() - 1;
        // Retreat out of a date run straddling the cut: the whole run tests.
        while (k > 0 && ds.records[idx[k - 1]].date == ds.records[idx[k]].date) --k;
        if (k == 0) {
            throw SplitError("site " + site +
                             ": all encounters at the boundary share one date; no strictly "
                             "earlier training block exists");
        }
        for (std::size_t i = 0; i < k; ++i) train_ids.insert(ds.records[idx[i]].encounter_id);
    }

    Dataset train, test;
    train.vocabulary = test.vocabulary = ds.vocabulary;
    train.site_registry = test.site_registry = ds.site_registry;
    for (const auto& r : ds.records) {
        (train_ids.count(r.encounter_id) ? train : test).records.push_back(r);
    }
    return {std::move(train), std::move(test)};
}

DomainAssignment assign_domains(const Dataset& train, const std::string& target_er,
                                DomainMode mode) {
    if (!train.has_site(target_er)) {
        throw ConfigError("unknown target site: " + target_er);
    }
    DomainAssignment out;
    if (mode == DomainMode::None) return out;
    if (train.site_registry.size() < 2) {
        throw ConfigError("domain labeling needs at least 2 sites");
    }

    std::unordered_map<std::string, int> index;
    if (mode == DomainMode::Multi) {
        int next = 0;
        for (const auto& site : train.site_registry) {
            if (site != target_er) index[site] = next++;
        }
        index[target_er] = next;  // target is class M
        out.n_domains = next + 1;
    } else {
        for (const auto& site : train.site_registry) index[site] = site == target_er ? 1 : 0;
        out.n_domains = 2;
    }
    out.index_per_record.reserve(train.records.size());
    for (const auto& r : train.records) out.index_per_record.push_back(index.at(r.er_id));
    return out;
}

void export_split_manifest(const Dataset& train, const Dataset& test, const std::string& path) {
    nlohmann::json j;
    auto ids = [](const Dataset& ds) {
        std::vector<std::string> v;
        v.reserve(ds.records.size());
        for (const auto& r : ds.records) v.push_back(r.encounter_id);
        return v;
    };
    j["train"] = ids(train);
    j["test"] = ids(test);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out.good()) throw IoError("write failed for " + path);
}

}  // namespace mdann
