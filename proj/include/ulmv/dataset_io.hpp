#pragma once

#include <filesystem>
#include <string>

#include "ulmv/data.hpp"

namespace ulmv {

inline constexpr int kManifestSchemaVersion = 1;

// On-disk layout: <dir>/manifest.json plus one ULMV blob per present
// (patient, view, timepoint) observation under <dir>/blobs/. The manifest
// records the catalog, per-timepoint availability, labels, and a byte size +
// CRC32 for every blob.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

// Verifies schema version, blob references, sizes, and checksums; the
// returned dataset passes Dataset::validate().
Dataset load_dataset(const std::filesystem::path& dir);

// Catalog identity for checkpoint/dataset compatibility checks.
std::string catalog_fingerprint(const ViewCatalog& catalog, int timepoints, int class_count);

}  // namespace ulmv
