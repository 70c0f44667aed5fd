// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "patternid/boxes.hpp"
#include "patternid/errors.hpp"

namespace patternid {

/// One annotated image: identity is optional (null for detection-only
/// records), boxes are in document order.
struct ImageRecord {
  std::string image_id;
  std::filesystem::path path;
  std::string species;
  std::optional<std::string> individual_id;
  std::vector<LabeledBox> boxes;
  std::map<std::string, std::string> capture_meta;
  int width = 0;   // 0 when unknown
  int height = 0;
};

struct DatasetManifest {
  std::string species;
  std::vector<ImageRecord> records;

  /// Distinct non-null individual ids.
  std::set<std::string> individuals() const {
    std::set<std::string> ids;
    for (const ImageRecord& r : records)
      if (r.individual_id) ids.insert(*r.individual_id);
    return ids;
  }

  const ImageRecord* find(const std::string& image_id) const {
    for (const ImageRecord& r : records)
      if (r.image_id == image_id) return &r;
    return nullptr;
  }
};

namespace detail {

inline const boost::property_tree::ptree& xml_child(
    const boost::property_tree::ptree& pt, const std::string& key,
    const std::string& file) {
  auto child = pt.get_child_optional(key);
  if (!child)
    throw FormatError("missing mandatory element <" + key + ">: " + file);
  return *child;
}

inline int xml_int(const boost::property_tree::ptree& pt,
                   const std::string& key, const std::string& file) {
  auto v = pt.get_optional<std::string>(key);
  if (!v) throw FormatError("missing mandatory element <" + key + ">: " + file);
  try {
    return static_cast<int>(std::lround(std::stod(*v)));
  } catch (const std::exception&) {
    throw FormatError("non-numeric element <" + key + ">: " + file);
  }
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Parse one annotation file in the labelImg Pascal-VOC layout. The record
/// id is the stem of the <filename> element (the image name); object labels
/// are preserved verbatim in document order.
inline ImageRecord parse_voc_xml(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_xml(path.string(), tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("malformed XML: " + path.string() + ": " + e.message());
  }

  const std::string file = path.string();
  const pt::ptree& ann = detail::xml_child(tree, "annotation", file);

  ImageRecord rec;
  auto filename = ann.get_optional<std::string>("filename");
  if (!filename)
    throw FormatError("missing mandatory element <filename>: " + file);
  rec.path = *filename;
  rec.image_id = rec.path.stem().string();
  if (auto size = ann.get_child_optional("size")) {
    rec.width = detail::xml_int(*size, "width", file);
    rec.height = detail::xml_int(*size, "height", file);
  }
  for (const auto& [key, node] : ann) {
    if (key != "object") continue;
    auto name = node.get_optional<std::string>("name");
    if (!name)
      throw FormatError("missing mandatory element <object/name>: " + file);
    const pt::ptree& bnd = detail::xml_child(node, "bndbox", file);
    LabeledBox box;
    box.label = *name;
    box.x_min = detail::xml_int(bnd, "xmin", file);
    box.y_min = detail::xml_int(bnd, "ymin", file);
    box.x_max = detail::xml_int(bnd, "xmax", file);
    box.y_max = detail::xml_int(bnd, "ymax", file);
    if (box.x_min >= box.x_max || box.y_min >= box.y_max)
      throw InvalidArgument("inverted box coordinates in " + file + " (" +
                            box.label + ")");
    rec.boxes.push_back(std::move(box));
  }
  return rec;
}

/// Write a record back to the labelImg layout. parse_voc_xml(write_voc_xml(r))
/// round-trips the filename, size and boxes exactly.
inline void write_voc_xml(const ImageRecord& rec,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path.string());
  out << "<annotation>\n"
      << "  <filename>" << detail::xml_escape(rec.path.string())
      << "</filename>\n"
      << "  <size>\n"
      << "    <width>" << rec.width << "</width>\n"
      << "    <height>" << rec.height << "</height>\n"
      << "    <depth>3</depth>\n"
      << "  </size>\n";
  for (const LabeledBox& b : rec.boxes) {
    out << "  <object>\n"
        << "    <name>" << detail::xml_escape(b.label) << "</name>\n"
        << "    <bndbox>\n"
        << "      <xmin>" << static_cast<long>(std::lround(b.x_min)) << "</xmin>\n"
        << "      <ymin>" << static_cast<long>(std::lround(b.y_min)) << "</ymin>\n"
        << "      <xmax>" << static_cast<long>(std::lround(b.x_max)) << "</xmax>\n"
        << "      <ymax>" << static_cast<long>(std::lround(b.y_max)) << "</ymax>\n"
        << "    </bndbox>\n"
        << "  </object>\n";
  }
  out << "</annotation>\n";
  if (!out) throw IoError("write failure: " + path.string());
}

/// Parse the identity sidecar: one `image_id<TAB>individual_id` per line,
/// `#` starts a comment, blank lines ignored.
inline std::map<std::string, std::string> parse_identity_table(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open identity table: " + path.string());
  std::map<std::string, std::string> table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw FormatError("identity table line " + std::to_string(lineno) +
                        " is not `image_id<TAB>individual_id`: " +
                        path.string());
    table[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return table;
}

/// Scan a directory of VOC XML files into a manifest. Identities come from
/// the sidecar table; records without an entry keep a null individual_id.
/// Image paths are resolved against images_dir when given, else against the
/// annotation directory.
inline DatasetManifest build_manifest(
    const std::filesystem::path& annotation_dir,
    const std::filesystem::path& identity_table_path = {},
    const std::string& species = {},
    const std::filesystem::path& images_dir = {}) {
  if (!std::filesystem::is_directory(annotation_dir))
    throw IoError("not a directory: " + annotation_dir.string());

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(annotation_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".xml")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  DatasetManifest manifest;
  manifest.species = species;
  std::set<std::string> seen;
  const std::filesystem::path base =
      images_dir.empty() ? annotation_dir : images_dir;
  for (const auto& file : files) {
    ImageRecord rec = parse_voc_xml(file);
    if (!seen.insert(rec.image_id).second)
      throw InvalidArgument("duplicate image_id: " + rec.image_id);
    rec.species = species;
    rec.path = base / rec.path;
    manifest.records.push_back(std::move(rec));
  }

  if (!identity_table_path.empty()) {
    const auto table = parse_identity_table(identity_table_path);
    for (const auto& [image_id, individual] : table) {
      bool found = false;
      for (ImageRecord& rec : manifest.records)
        if (rec.image_id == image_id) {
          rec.individual_id = individual;
          found = true;
          break;
        }
      if (!found)
        throw InvalidArgument("identity table references unknown image: " +
                              image_id);
    }
  }
  return manifest;
}

/// Manifest persistence: JSON with stable key order.
inline void save_manifest(const DatasetManifest& manifest,
                          const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["species"] = manifest.species;
  j["records"] = nlohmann::ordered_json::array();
  for (const ImageRecord& r : manifest.records) {
    nlohmann::ordered_json rec;
    rec["image_id"] = r.image_id;
    rec["path"] = r.path.string();
    rec["species"] = r.species;
    if (r.individual_id)
      rec["individual_id"] = *r.individual_id;
    else
      rec["individual_id"] = nullptr;
    rec["width"] = r.width;
    rec["height"] = r.height;
    rec["boxes"] = nlohmann::ordered_json::array();
    for (const LabeledBox& b : r.boxes)
      rec["boxes"].push_back({{"label", b.label},
                              {"x_min", b.x_min},
                              {"y_min", b.y_min},
                              {"x_max", b.x_max},
                              {"y_max", b.y_max}});
    if (!r.capture_meta.empty()) rec["capture_meta"] = r.capture_meta;
    j["records"].push_back(std::move(rec));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open file for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failure: " + path.string());
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed manifest JSON: " + path.string() + ": " +
                     e.what());
  }
  DatasetManifest manifest;
  try {
    manifest.species = j.value("species", std::string{});
    for (const auto& rec : j.at("records")) {
      ImageRecord r;
      r.image_id = rec.at("image_id").get<std::string>();
      r.path = rec.at("path").get<std::string>();
      r.species = rec.value("species", std::string{});
      if (rec.contains("individual_id") && !rec["individual_id"].is_null())
        r.individual_id = rec["individual_id"].get<std::string>();
      r.width = rec.value("width", 0);
      r.height = rec.value("height", 0);
      for (const auto& b : rec.value("boxes", nlohmann::json::array())) {
        LabeledBox box;
        box.label = b.at("label").get<std::string>();
        box.x_min = b.at("x_min").get<double>();
        box.y_min = b.at("y_min").get<double>();
        box.x_max = b.at("x_max").get<double>();
        box.y_max = b.at("y_max").get<double>();
        r.boxes.push_back(std::move(box));
      }
      if (rec.contains("capture_meta"))
        r.capture_meta =
            rec["capture_meta"].get<std::map<std::string, std::string>>();
      manifest.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest missing mandatory field: " + path.string() +
                      ": " + e.what());
  }
  return manifest;
}

}  // namespace patternid
