#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "trance/container.hpp"
#include "trance/error.hpp"
#include "trance/linalg.hpp"
#include "trance/tensor_io.hpp"

namespace trance {

/// Linear classifier applied to globally average-pooled activations.
struct ClassifierHead {
  MatrixF weights;  // num_classes x c
  VectorF bias;     // num_classes
  std::vector<std::string> class_names;

  std::size_t num_classes() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t channels() const { return static_cast<std::size_t>(weights.cols()); }

  friend bool operator==(const ClassifierHead& a, const ClassifierHead& b) {
    return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
           a.weights == b.weights && a.bias.size() == b.bias.size() && a.bias == b.bias &&
           a.class_names == b.class_names;
  }
};

struct ClassEntry {
  std::int64_t class_id = 0;
  std::string class_name;
  std::vector<ActivationTensor> tensors;
  std::vector<std::string> image_ids;

  friend bool operator==(const ClassEntry&, const ClassEntry&) = default;
};

struct ActivationArchive {
  static constexpr int kFormatVersion = 1;

  std::string model_name;
  std::string layer_name;
  std::vector<ClassEntry> classes;
  ClassifierHead head;
  nlohmann::json metadata = nlohmann::json::object();
  int format_version = kFormatVersion;

  friend bool operator==(const ActivationArchive&, const ActivationArchive&) = default;
};

inline const ClassEntry& find_class(const ActivationArchive& archive, std::int64_t class_id) {
  for (const auto& entry : archive.classes)
    if (entry.class_id == class_id) return entry;
  fail(ErrorCode::ClassNotFound, "class id " + std::to_string(class_id) + " is not in the archive");
}

/// Checks every archive invariant; throws on the first violation.
inline void validate(const ActivationArchive& archive) {
  const auto& head = archive.head;
  require(head.num_classes() >= 2, ErrorCode::HeadMismatch, "classifier head needs at least 2 classes");
  require(static_cast<std::size_t>(head.bias.size()) == head.num_classes(), ErrorCode::HeadMismatch,
          "head bias length differs from class count");
  require(head.class_names.empty() || head.class_names.size() == head.num_classes(),
          ErrorCode::HeadMismatch, "head class_names length differs from class count");
  require(head.weights.allFinite() && head.bias.allFinite(), ErrorCode::HeadMismatch,
          "head contains non-finite values");

  for (const auto& entry : archive.classes) {
    const std::string where = "class " + std::to_string(entry.class_id);
    require(entry.class_id >= 0 && static_cast<std::size_t>(entry.class_id) < head.num_classes(),
            ErrorCode::HeadMismatch, where + " has no row in the classifier head");
    require(entry.image_ids.size() == entry.tensors.size(), ErrorCode::ShapeInconsistent,
            where + ": image_ids length differs from tensor count");
    for (const auto& t : entry.tensors) {
      require(t.h > 0 && t.w > 0 && t.c > 0 && t.data.size() == t.h * t.w * t.c,
              ErrorCode::ShapeInconsistent, where + ": malformed tensor");
      require(t.same_shape(entry.tensors.front()), ErrorCode::ShapeInconsistent,
              where + ": tensor dims differ within the class");
      require(t.all_finite(), ErrorCode::ShapeInconsistent, where + ": non-finite activation");
    }
    if (!entry.tensors.empty())
      require(entry.tensors.front().c == head.channels(), ErrorCode::HeadMismatch,
              where + ": head width " + std::to_string(head.channels()) + " != channel count " +
                  std::to_string(entry.tensors.front().c));
  }
}

inline void write_archive(const ActivationArchive& archive, const std::filesystem::path& path) {
  validate(archive);
  container::PayloadWriter payload;
  nlohmann::json index;
  index["format_version"] = archive.format_version;
  index["model_name"] = archive.model_name;
  index["layer_name"] = archive.layer_name;
  index["metadata"] = archive.metadata;

  const auto& head = archive.head;
  index["head"] = {
      {"num_classes", head.num_classes()},
      {"channels", head.channels()},
      {"class_names", head.class_names},
      {"weights", payload.append({head.weights.data(), static_cast<std::size_t>(head.weights.size())})},
      {"bias", payload.append({head.bias.data(), static_cast<std::size_t>(head.bias.size())})},
  };

  auto classes = nlohmann::json::array();
  for (const auto& entry : archive.classes) {
    nlohmann::json item;
    item["class_id"] = entry.class_id;
    item["class_name"] = entry.class_name;
    item["image_ids"] = entry.image_ids;
    if (!entry.tensors.empty()) {
      const auto& t = entry.tensors.front();
      item["shape"] = {t.h, t.w, t.c};
    } else {
      item["shape"] = {0, 0, 0};
    }
    auto tensors = nlohmann::json::array();
    for (const auto& t : entry.tensors) tensors.push_back(payload.append(t.data));
    item["tensors"] = std::move(tensors);
    classes.push_back(std::move(item));
  }
  index["classes"] = std::move(classes);
  container::write_file(path, container::kArchiveMagic, index, payload.payload());
}

inline ActivationArchive read_archive(const std::filesystem::path& path) {
  const auto contents = container::read_file(path, container::kArchiveMagic);
  const auto& index = contents.index;
  ActivationArchive archive;
  try {
    archive.format_version = index.at("format_version").get<int>();
    archive.model_name = index.at("model_name").get<std::string>();
    archive.layer_name = index.at("layer_name").get<std::string>();
    archive.metadata = index.value("metadata", nlohmann::json::object());

    const auto& head = index.at("head");
    const auto rows = head.at("num_classes").get<Eigen::Index>();
    const auto cols = head.at("channels").get<Eigen::Index>();
    const auto weights = contents.section(head.at("weights"));
    const auto bias = contents.section(head.at("bias"));
    require(weights.size() == static_cast<std::size_t>(rows * cols), ErrorCode::HeadMismatch,
            "head weight count does not match num_classes*channels");
    require(bias.size() == static_cast<std::size_t>(rows), ErrorCode::HeadMismatch,
            "head bias count does not match num_classes");
    archive.head.weights = Eigen::Map<const MatrixF>(weights.data(), rows, cols);
    archive.head.bias = Eigen::Map<const VectorF>(bias.data(), rows);
    archive.head.class_names = head.at("class_names").get<std::vector<std::string>>();

    for (const auto& item : index.at("classes")) {
      ClassEntry entry;
      entry.class_id = item.at("class_id").get<std::int64_t>();
      entry.class_name = item.at("class_name").get<std::string>();
      entry.image_ids = item.at("image_ids").get<std::vector<std::string>>();
      const auto shape = item.at("shape").get<std::vector<std::size_t>>();
      require(shape.size() == 3, ErrorCode::ShapeInconsistent, "class shape must have 3 dims");
      for (const auto& section : item.at("tensors")) {
        auto values = contents.section(section);
        require(values.size() == shape[0] * shape[1] * shape[2], ErrorCode::ShapeInconsistent,
                "class " + std::to_string(entry.class_id) + ": tensor length differs from declared shape");
        entry.tensors.emplace_back(shape[0], shape[1], shape[2], std::move(values));
      }
      archive.classes.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::TruncatedPayload, std::string("malformed index: ") + e.what());
  }
  validate(archive);
  return archive;
}

}  // namespace trance
