#pragma once

#include <fstream>
#include <optional>
#include <string>

#include "tac/errors.hpp"

// Structured prompt assembly: a fixed system prompt plus a clinical prompt
// built from the standard report sections of the current study.

namespace tac {

struct ReportSections {
  std::optional<std::string> indication;
  std::optional<std::string> history;
  std::optional<std::string> comparison;
  std::optional<std::string> technique;

  enum class Target { Findings, Impression };
  Target target = Target::Findings;
};

struct PromptPair {
  std::string system;
  std::string clinical;
};

inline PromptPair build_prompt(const ReportSections& sections) {
  PromptPair out;
  out.system =
      "The assistant specialised in comparing Chest X-ray images, identifying "
      "differences, and noting temporal changes.";

  const char* noun =
      sections.target == ReportSections::Target::Impression ? "impression"
                                                            : "findings";
  out.clinical = std::string("Provide a detailed description of the ") + noun +
                 " in the radiology image.";

  const bool any = sections.indication || sections.history ||
                   sections.comparison || sections.technique;
  if (!any) return out;  // bare base instruction when no sections exist

  out.clinical += " Following clinical context:";
  auto append = [&](const char* name, const std::optional<std::string>& v) {
    if (v) out.clinical += std::string("\n") + name + ": " + *v;
  };
  // Fixed section order.
  append("Indication", sections.indication);
  append("History", sections.history);
  append("Comparison", sections.comparison);
  append("Technique", sections.technique);
  return out;
}

// Sections file: "Name: value" lines; recognised names are Indication,
// History, Comparison, Technique and Target (findings|impression).
inline ReportSections load_sections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open sections file: " + path);
  ReportSections s;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const std::size_t colon = line.find(':');
    if (colon == std::string::npos) {
      throw UsageError("sections file line " + std::to_string(line_no) +
                       ": expected 'Name: value'");
    }
    std::string name = line.substr(first, colon - first);
    while (!name.empty() && (name.back() == ' ' || name.back() == '\t'))
      name.pop_back();
    std::string value = line.substr(colon + 1);
    const auto v = value.find_first_not_of(" \t");
    value = v == std::string::npos ? std::string() : value.substr(v);

    if (name == "Indication") {
      s.indication = value;
    } else if (name == "History") {
      s.history = value;
    } else if (name == "Comparison") {
      s.comparison = value;
    } else if (name == "Technique") {
      s.technique = value;
    } else if (name == "Target") {
      if (value == "findings" || value == "Findings") {
        s.target = ReportSections::Target::Findings;
      } else if (value == "impression" || value == "Impression") {
        s.target = ReportSections::Target::Impression;
      } else {
        throw UsageError("sections file line " + std::to_string(line_no) +
                         ": Target must be findings or impression");
      }
    } else {
      throw UsageError("sections file line " + std::to_string(line_no) +
                       ": unknown section '" + name + "'");
    }
  }
  return s;
}

}  // namespace tac
