#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "csd/dialogue.hpp"

namespace testing {

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(CSD_SOURCE_DIR) / rel;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("csd-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline csd::DialogueContext jan_context() {
  return csd::DialogueContext(
      "jan-dog", {{csd::SpeakerRole::Other, "I had to kick Jan out of my house last night."},
                  {csd::SpeakerRole::You, "What got you so mad that you kicked her out of the house?"},
                  {csd::SpeakerRole::Other, "She kept bugging the dog and bothering him."}});
}

// The ten example inferences for the Jan dialogue, raw text in canonical type order.
inline std::map<csd::CommonsenseType, std::string> jan_raw_inferences() {
  using csd::CommonsenseType;
  return {
      {CommonsenseType::Cause, "the dog being a rescue dog and jan being a new owner."},
      {CommonsenseType::ReactO, "concerned about the well-being of the dog and wonders if there are any underlying issues that could be causing the behavior."},
      {CommonsenseType::React, "guilty for having to deal with jan's behavior."},
      {CommonsenseType::Subsequent, "the listener might ask the speaker if they have any other pets in the house."},
      {CommonsenseType::Attribute, "someone who takes their pets seriously and doesn't tolerate any behavior that could harm them."},
      {CommonsenseType::DesireO, "to express sympathy for speaker's situation and offer to help him find a new living situation."},
      {CommonsenseType::Desire, "to find a new place to live that is more peaceful and doesn't have any pets."},
      {CommonsenseType::Motivation, "by a need for peace and quiet in their home."},
      {CommonsenseType::Constituent, "jan not respecting the boundaries of the house and not being respectful of the speaker's property."},
      {CommonsenseType::Prerequisite, "jan had access to the dog's living space."},
  };
}

inline csd::InferenceSet jan_inference_set() {
  std::map<csd::CommonsenseType, csd::Inference> by_type;
  for (const auto& [type, raw] : jan_raw_inferences()) by_type.emplace(type, csd::Inference::make(type, raw));
  return csd::InferenceSet(by_type);
}

}  // namespace testing
