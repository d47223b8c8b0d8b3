#include "ulmv/dataset_io.hpp"

#include <fstream>

#include "json.hpp"
#include "ulmv/serialize.hpp"

namespace ulmv {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json catalog_to_json(const ViewCatalog& cat) {
  ordered_json views = ordered_json::array();
  for (size_t v = 0; v < cat.views.size(); ++v) {
    const ViewSpec& spec = cat.views[v];
    ordered_json jv;
    jv["name"] = spec.name;
    jv["kind"] = view_kind_name(spec.kind);
    if (spec.kind == ViewKind::image) {
      jv["image_shape"] = {spec.image_shape[0], spec.image_shape[1], spec.image_shape[2]};
    } else {
      ordered_json cols = ordered_json::array();
      for (const TabularColumn& c : spec.schema.columns) {
        ordered_json jc;
        jc["name"] = c.name;
        jc["type"] = c.categorical ? "categorical" : "continuous";
        if (c.categorical) jc["categories"] = c.categories;
        cols.push_back(jc);
      }
      jv["columns"] = cols;
    }
    jv["feature_dim"] = spec.feature_dim;
    jv["schedule"] = cat.schedules[v];
    views.push_back(jv);
  }
  return views;
}

ViewCatalog catalog_from_json(const ordered_json& views) {
  ViewCatalog cat;
  for (size_t v = 0; v < views.size(); ++v) {
    const auto& jv = views[v];
    ViewSpec spec;
    spec.view_id = static_cast<int>(v);
    spec.name = jv.at("name").get<std::string>();
    const std::string kind = jv.at("kind").get<std::string>();
    if (kind == "image") {
      spec.kind = ViewKind::image;
      const auto sh = jv.at("image_shape");
      spec.image_shape = {sh.at(0).get<int64_t>(), sh.at(1).get<int64_t>(), sh.at(2).get<int64_t>()};
    } else if (kind == "tabular") {
      spec.kind = ViewKind::tabular;
      for (const auto& jc : jv.at("columns")) {
        TabularColumn c;
        c.name = jc.at("name").get<std::string>();
        const std::string type = jc.at("type").get<std::string>();
        c.categorical = type == "categorical";
        if (!c.categorical && type != "continuous")
          throw DataFormatError("manifest: unknown column type '" + type + "'");
        if (c.categorical) c.categories = jc.at("categories").get<std::vector<std::string>>();
        spec.schema.columns.push_back(std::move(c));
      }
    } else {
      throw DataFormatError("manifest: unknown view kind '" + kind + "'");
    }
    spec.feature_dim = jv.at("feature_dim").get<int64_t>();
    cat.views.push_back(std::move(spec));
    cat.schedules.push_back(jv.at("schedule").get<std::vector<int>>());
  }
  return cat;
}

std::string blob_name(const std::string& patient, const std::string& view, int t) {
  return "blobs/" + patient + "_" + view + "_t" + std::to_string(t) + ".bin";
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir / "blobs");

  ordered_json manifest;
  manifest["schema_version"] = kManifestSchemaVersion;
  manifest["seed"] = ds.seed;
  manifest["timepoints"] = ds.timepoints;
  manifest["class_count"] = ds.class_count;
  if (!ds.generator_config_json.empty())
    manifest["generator"] = ordered_json::parse(ds.generator_config_json);
  manifest["views"] = catalog_to_json(ds.catalog);

  ordered_json patients = ordered_json::array();
  for (const PatientSeries& p : ds.patients) {
    ordered_json jp;
    jp["id"] = p.id;
    jp["split"] = p.split;
    ordered_json steps = ordered_json::array();
    for (int t = 0; t < ds.timepoints; ++t) {
      const TimepointRecord& rec = p.steps[static_cast<size_t>(t)];
      ordered_json js;
      js["label"] = rec.label ? ordered_json(*rec.label) : ordered_json(nullptr);
      ordered_json obs = ordered_json::object();
      for (int v = 0; v < ds.catalog.n_views(); ++v) {
        if (!rec.available(v)) continue;
        const std::string rel = blob_name(p.id, ds.catalog.views[static_cast<size_t>(v)].name, t);
        const std::vector<uint8_t> bytes = blob_bytes(*rec.observations[static_cast<size_t>(v)]);
        write_file_bytes(dir / rel, bytes);
        ordered_json jb;
        jb["file"] = rel;
        jb["bytes"] = bytes.size();
        jb["crc32"] = crc32_hex(bytes);
        obs[ds.catalog.views[static_cast<size_t>(v)].name] = jb;
      }
      js["obs"] = obs;
      steps.push_back(js);
    }
    jp["steps"] = steps;
    patients.push_back(jp);
  }
  manifest["patients"] = patients;

  std::ofstream os(dir / "manifest.json");
  if (!os) throw DataFormatError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(1) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream is(manifest_path);
  if (!is) throw DataFormatError("cannot open " + manifest_path.string());
  ordered_json manifest;
  try {
    is >> manifest;
  } catch (const std::exception& e) {
    throw DataFormatError("manifest parse error: " + std::string(e.what()));
  }

  const int version = manifest.at("schema_version").get<int>();
  if (version != kManifestSchemaVersion)
    throw DataFormatError("manifest: schema version " + std::to_string(version) + " unsupported, expected " +
                          std::to_string(kManifestSchemaVersion));

  Dataset ds;
  ds.seed = manifest.at("seed").get<uint64_t>();
  ds.timepoints = manifest.at("timepoints").get<int>();
  ds.class_count = manifest.at("class_count").get<int>();
  if (manifest.contains("generator")) ds.generator_config_json = manifest["generator"].dump();
  ds.catalog = catalog_from_json(manifest.at("views"));

  for (const auto& jp : manifest.at("patients")) {
    PatientSeries p;
    p.id = jp.at("id").get<std::string>();
    p.split = jp.at("split").get<std::string>();
    const auto& steps = jp.at("steps");
    if (static_cast<int>(steps.size()) != ds.timepoints)
      throw DataFormatError("manifest: patient " + p.id + " step count mismatch");
    for (int t = 0; t < ds.timepoints; ++t) {
      const auto& js = steps[static_cast<size_t>(t)];
      TimepointRecord rec;
      rec.observations.resize(static_cast<size_t>(ds.catalog.n_views()));
      if (!js.at("label").is_null()) rec.label = js.at("label").get<int>();
      for (const auto& [view_name, jb] : js.at("obs").items()) {
        const int v = ds.catalog.find_view(view_name);
        if (v < 0) throw DataFormatError("manifest: patient " + p.id + " references unknown view " + view_name);
        const std::string rel = jb.at("file").get<std::string>();
        const auto path = dir / rel;
        if (!std::filesystem::exists(path))
          throw DataFormatError("manifest: dangling blob reference " + rel + " for patient " + p.id);
        const std::vector<uint8_t> bytes = read_file_bytes(path);
        if (bytes.size() != jb.at("bytes").get<size_t>())
          throw DataFormatError("blob " + rel + ": size " + std::to_string(bytes.size()) + " != manifest " +
                                std::to_string(jb.at("bytes").get<size_t>()));
        if (crc32_hex(bytes) != jb.at("crc32").get<std::string>())
          throw DataFormatError("blob " + rel + ": checksum mismatch");
        std::istringstream bs(std::string(bytes.begin(), bytes.end()), std::ios::binary);
        rec.observations[static_cast<size_t>(v)] = read_blob(bs, rel);
      }
      p.steps.push_back(std::move(rec));
    }
    ds.patients.push_back(std::move(p));
  }
  ds.validate();
  return ds;
}

std::string catalog_fingerprint(const ViewCatalog& catalog, int timepoints, int class_count) {
  ordered_json j;
  j["views"] = catalog_to_json(catalog);
  j["timepoints"] = timepoints;
  j["class_count"] = class_count;
  return fingerprint(j.dump());
}

}  // namespace ulmv
