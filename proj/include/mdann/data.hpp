#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdann/matrix.hpp"

namespace mdann {

/// Per-concept status extracted from a discharge note.
enum class CuiStatus : std::uint8_t { Present, Negated, Missing };

char status_token(CuiStatus s);
CuiStatus status_from_token(char token);

/// One ER encounter: site, date, concept statuses, 7-day revisit flag.
struct EncounterRecord {
    std::string encounter_id;
    std::string er_id;
    std::int32_t date = 0;  // days since 1970-01-01
    std::vector<CuiStatus> statuses;
    int label = 0;

    friend bool operator==(const EncounterRecord&, const EncounterRecord&) = default;
};

struct Dataset {
    std::vector<std::string> vocabulary;
    std::vector<EncounterRecord> records;
    std::vector<std::string> site_registry;

    std::size_t vocab_size() const { return vocabulary.size(); }
    std::size_t size() const { return records.size(); }
    bool has_site(const std::string& er_id) const;

    void validate() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Dense training view of a record list: one-hot statuses, task labels,
/// optional one-hot domain labels.
struct EncodedBatch {
    Matrix x;                           // n x 3V, entries in {0,1}
    std::vector<int> y;                 // n, in {0,1}
    Matrix d;                           // n x (M+1) one-hot, empty when unused
    std::vector<std::string> row_meta;  // encounter ids, row order
    std::string target_er;

    std::size_t n() const { return row_meta.size(); }
    bool has_domains() const { return !d.empty(); }
};

struct SplitSpec {
    double train_fraction = 0.8;
};

enum class DatasetFormat { Csv, Jsonl };

/// ISO-8601 calendar date <-> days since 1970-01-01.
std::int32_t parse_date(const std::string& iso);
std::string format_date(std::int32_t days);

/// One-hot encode: Present -> [1,0,0], Negated -> [0,1,0], Missing -> [0,0,1]
/// per concept, row order preserved. Domain labels are left empty.
EncodedBatch encode(const std::vector<EncounterRecord>& records,
                    const std::vector<std::string>& vocabulary);

/// Invert the one-hot encoding of a single row back to statuses.
std::vector<CuiStatus> decode_row(std::span<const double> row);

Dataset load_dataset(const std::string& path, DatasetFormat format);
void save_dataset(const Dataset& ds, const std::string& path, DatasetFormat format);

/// Per-site temporal split. Records are ordered by (date, encounter_id); the
/// cut lands at floor(fraction * n_site). When the cut falls inside a run of
/// equal dates, the whole run moves to the test side, so training encounters
/// are always strictly earlier than testing encounters of the same site.
std::pair<Dataset, Dataset> temporal_split(const Dataset& ds, const SplitSpec& spec);

enum class DomainMode { Multi, Single, None };

struct DomainAssignment {
    std::vector<int> index_per_record;  // parallel to train.records
    int n_domains = 0;                  // M+1 classes, 0 when mode is None
};

/// Multi: each source site gets its own index 0..M-1 and the target gets M.
/// Single: sources collapse to 0, target is 1. None: no labels emitted.
DomainAssignment assign_domains(const Dataset& train, const std::string& target_er,
                                DomainMode mode);

/// JSON audit record listing encounter ids on each side of a split.
void export_split_manifest(const Dataset& train, const Dataset& test, const std::string& path);

}  // namespace mdann
