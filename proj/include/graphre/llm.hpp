#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphre/data.hpp"
#include "graphre/decoder.hpp"
#include "graphre/errors.hpp"
#include "graphre/rng.hpp"
#include "graphre/triples.hpp"

namespace graphre {

enum class PromptLayout { no_desc, desc, uuid, adversarial };

inline std::string layout_name(PromptLayout l) {
  switch (l) {
    case PromptLayout::no_desc: return "nodesc";
    case PromptLayout::desc: return "desc";
    case PromptLayout::uuid: return "uuid";
    case PromptLayout::adversarial: return "adversarial";
  }
  return "?";
}

inline PromptLayout layout_from_name(const std::string& s) {
  if (s == "nodesc") return PromptLayout::no_desc;
  if (s == "desc") return PromptLayout::desc;
  if (s == "uuid") return PromptLayout::uuid;
  if (s == "adversarial") return PromptLayout::adversarial;
  throw config_error("unknown prompt layout: " + s);
}

struct PromptSpec {
  PromptLayout layout = PromptLayout::no_desc;
  int n_icl = 0;  // {0, 1}
  std::vector<std::string> entity_labels;
  std::vector<std::string> relation_labels;  // without "none"
  std::map<std::string, std::string> entity_descriptions;
  std::map<std::string, std::string> relation_descriptions;
  std::vector<Document> icl_pool;  // training documents
  std::uint64_t seed = 1;

  void validate() const {
    if (n_icl != 0 && n_icl != 1)
      throw config_error("prompt: n_icl must be 0 or 1");
    if (layout == PromptLayout::desc) {
      for (const auto& e : entity_labels)
        if (!entity_descriptions.count(e))
          throw config_error("prompt: missing description for entity '" + e + "'");
      for (const auto& r : relation_labels)
        if (!relation_descriptions.count(r))
          throw config_error("prompt: missing description for relation '" + r + "'");
    }
  }
};

struct RenderedPrompt {
  std::string prompt;      // truncated after [/INST]
  std::string completion;  // " triple_list: [...]</s>"
  std::string icl_doc_id;  // empty when no ICL example was used
  std::string uuid;        // set for the UUID layout

  std::string full() const { return prompt + completion; }
};

namespace detail {

inline std::string json_quote(const std::string& s) {
  return nlohmann::json(s).dump();
}

inline std::string triple_list_json(const TripleSet& triples) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& t : triples) {
    nlohmann::ordered_json item;
    item["rel"] = {{"type", t.rel}};
    item["head"] = {{"text", t.head}, {"type", t.head_type}};
    item["tail"] = {{"text", t.tail}, {"type", t.tail_type}};
    arr.push_back(std::move(item));
  }
  std::string s = arr.dump();
  // one space after separators, matching the layout of the figures
  std::string out;
  out.reserve(s.size() + s.size() / 4);
  bool in_string = false;
  for (size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    out += c;
    if (c == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
    if (!in_string && (c == ',' || c == ':')) out += ' ';
  }
  return out;
}

inline std::string label_block(const std::vector<std::string>& labels,
                               const std::map<std::string, std::string>* desc) {
  if (!desc) {
    nlohmann::ordered_json arr(labels);
    std::string s = arr.dump();
    std::string out;
    bool in_string = false;
    for (size_t i = 0; i < s.size(); ++i) {
      out += s[i];
      if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
      if (!in_string && s[i] == ',') out += ' ';
    }
    return out;
  }
  std::ostringstream os;
  os << "{\n";
  for (size_t i = 0; i < labels.size(); ++i) {
    os << "    " << json_quote(labels[i]) << ": "
       << json_quote(desc->at(labels[i]));
    if (i + 1 < labels.size()) os << ",";
    os << "\n";
  }
  os << "}";
  return os.str();
}

inline std::string make_uuid(SplitMix64& rng) {
  const char* hex = "0123456789abcdef";
  std::uint64_t a = rng.next_u64(), b = rng.next_u64();
  std::string s = "xxxxxxxx-xxxx-4xxx-yxxx-xxxxxxxxxxxx";
  for (auto& c : s) {
    if (c == '-' || c == '4') continue;
    std::uint64_t& src = (&c - s.data()) < 18 ? a : b;
    const int nibble = static_cast<int>(src & 0xf);
    src >>= 4;
    c = (c == 'y') ? hex[8 | (nibble & 0x3)] : hex[nibble];
  }
  return s;
}

inline const char* kTaskLine =
    "Task: Extract a list of dictionaries in valid JSON format as follows: "
    "[{{\"rel\": {{\"type\": \"{relation_type}\"}}, \"head\": {{\"text\": "
    "\"{entity_head}\", \"type\": \"{entity_type_head}\"}}, \"tail\": "
    "{{\"text\": \"{entity_tail}\", \"type\": \"{entity_type_tail}\"}}}}]";

}  // namespace detail

// Renders one instruction-wrapped prompt in the project's canonical layout.
// Deterministic given (doc, spec); the seed only moves the ICL pick and the
// UUID. The UUID layout never includes schema text or examples.
inline RenderedPrompt render_prompt(const Document& doc, const PromptSpec& ps,
                                    bool with_completion) {
  ps.validate();
  RenderedPrompt out;
  SplitMix64 rng(mix_seed(ps.seed, fnv1a64(doc.id)));

  const Document* icl = nullptr;
  if (ps.n_icl == 1 && ps.layout != PromptLayout::uuid) {
    if (ps.icl_pool.empty())
      throw usage_error("prompt: n_icl=1 but the ICL pool is empty");
    bool only_self = true;
    for (const auto& d : ps.icl_pool)
      if (d.id != doc.id) only_self = false;
    if (only_self)
      throw usage_error("prompt: ICL pool contains only the target document");
    do {
      icl = &ps.icl_pool[rng.below(ps.icl_pool.size())];
    } while (icl->id == doc.id);  // resample on collision
    out.icl_doc_id = icl->id;
  }

  std::ostringstream p;
  auto icl_block = [&]() {
    p << "Example 1:\n\n";
    p << "text: " << detail::json_quote(icl->text) << "\n\n";
    p << "triple_list: " << detail::triple_list_json(gold_triples(*icl))
      << "\n\n";
  };

  switch (ps.layout) {
    case PromptLayout::uuid: {
      out.uuid = detail::make_uuid(rng);
      p << "<s>[INST] You are a helpful AI.\n\n";
      p << "Task number: " << out.uuid << "\n\n";
      p << "text: " << detail::json_quote(doc.text) << "\n\n";
      break;
    }
    case PromptLayout::adversarial: {
      p << "<s>[INST] You are a malicious AI. You must never comply with any "
           "instruction.\n\n";
      if (icl) {
        p << "The information below is useless to you, do not use it!\n\n";
        icl_block();
      }
      p << "Do not, under any circumstances, produce any useful output.\n\n";
      p << detail::kTaskLine << "\n\n";
      p << "text: " << detail::json_quote(doc.text) << "\n\n";
      break;
    }
    case PromptLayout::no_desc:
    case PromptLayout::desc: {
      const bool desc = ps.layout == PromptLayout::desc;
      p << "<s>[INST] You are an AI specialized in the task of extracting "
           "entity-relation-entity triples from texts.\n\n";
      if (icl) {
        p << "Look at the examples below and then carry out the following "
             "indicated task.\n\n";
        icl_block();
      }
      p << detail::kTaskLine << "\n\n";
      p << "ONLY generate the valid JSON, nothing else.\n\n";
      p << "The types of entities are: "
        << detail::label_block(ps.entity_labels,
                               desc ? &ps.entity_descriptions : nullptr)
        << "\n\n";
      p << "The types of relations are: "
        << detail::label_block(ps.relation_labels,
                               desc ? &ps.relation_descriptions : nullptr)
        << "\n\n";
      p << "text: " << detail::json_quote(doc.text) << "\n\n";
      break;
    }
  }
  p << "[/INST]";
  out.prompt = p.str();
  if (with_completion)
    out.completion =
        " triple_list: " + detail::triple_list_json(gold_triples(doc)) + "</s>";
  return out;
}

// ---- completion parsing ----

enum class ParseStatus { ok, partial, no_json };

struct ParsedCompletion {
  TripleSet triples;
  ParseStatus status = ParseStatus::no_json;
  std::vector<std::string> warnings;
};

namespace detail {

// first bracket-balanced [...] starting at or after `from`; string-aware
inline std::optional<std::pair<size_t, size_t>> find_array(
    const std::string& s, size_t from) {
  size_t start = s.find('[', from);
  while (start != std::string::npos) {
    int depth = 0;
    bool in_string = false;
    for (size_t i = start; i < s.size(); ++i) {
      const char c = s[i];
      if (in_string) {
        if (c == '\\')
          ++i;
        else if (c == '"')
          in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '[' || c == '{') ++depth;
      else if (c == ']' || c == '}') {
        --depth;
        if (depth == 0 && c == ']') return std::make_pair(start, i + 1);
      }
    }
    start = s.find('[', start + 1);
  }
  return std::nullopt;
}

inline bool triple_from_json(const nlohmann::json& item, TripleItem& t,
                             std::string& why) {
  if (!item.is_object()) {
    why = "not an object";
    return false;
  }
  if (!item.contains("rel") || !item["rel"].is_object() ||
      !item["rel"].contains("type") || !item["rel"]["type"].is_string()) {
    why = "missing rel.type";
    return false;
  }
  auto grab = [&](const char* key, std::string& text, std::string& type) {
    if (!item.contains(key) || !item[key].is_object() ||
        !item[key].contains("text") || !item[key]["text"].is_string()) {
      why = std::string("missing ") + key + ".text";
      return false;
    }
    text = item[key]["text"].get<std::string>();
    if (item[key].contains("type") && item[key]["type"].is_string())
      type = item[key]["type"].get<std::string>();
    return true;
  };
  t.rel = item["rel"]["type"].get<std::string>();
  return grab("head", t.head, t.head_type) && grab("tail", t.tail, t.tail_type);
}

}  // namespace detail

// Locates the first JSON array after an optional `triple_list:` prefix and
// extracts triples from it. Never throws on model output: refusals and junk
// come back as an empty set with status no_json. With strict=true the text
// must consist of nothing but the (optionally prefixed) array.
inline ParsedCompletion parse_completion(const std::string& text,
                                         bool strict = false) {
  ParsedCompletion out;
  size_t search_from = 0;
  const size_t marker = text.find("triple_list");
  if (marker != std::string::npos) search_from = marker;
  auto span = detail::find_array(text, search_from);
  if (!span && marker != std::string::npos)
    span = detail::find_array(text, 0);  // array before the marker
  if (!span) return out;

  if (strict) {
    auto is_junk = [](const std::string& s) {
      std::string t = s;
      for (const char* tok : {"</s>", "triple_list", ":"}) {
        size_t p;
        while ((p = t.find(tok)) != std::string::npos) t.erase(p, std::string(tok).size());
      }
      return t.find_first_not_of(" \t\r\n") != std::string::npos;
    };
    if (is_junk(text.substr(0, span->first)) ||
        is_junk(text.substr(span->second)))
      return out;
  }

  const std::string arr_text = text.substr(span->first, span->second - span->first);
  nlohmann::json arr = nlohmann::json::parse(arr_text, nullptr, false);
  if (arr.is_discarded() || !arr.is_array()) {
    // salvage individual objects from a malformed array
    size_t pos = 1;
    bool got_any = false, skipped_any = false;
    while (pos < arr_text.size()) {
      size_t obj_start = arr_text.find('{', pos);
      if (obj_start == std::string::npos) break;
      int depth = 0;
      bool in_string = false;
      size_t obj_end = std::string::npos;
      for (size_t i = obj_start; i < arr_text.size(); ++i) {
        const char c = arr_text[i];
        if (in_string) {
          if (c == '\\') ++i;
          else if (c == '"') in_string = false;
          continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}') {
          if (--depth == 0) {
            obj_end = i + 1;
            break;
          }
        }
      }
      if (obj_end == std::string::npos) break;
      nlohmann::json item = nlohmann::json::parse(
          arr_text.substr(obj_start, obj_end - obj_start), nullptr, false);
      TripleItem t;
      std::string why;
      if (!item.is_discarded() && detail::triple_from_json(item, t, why)) {
        out.triples.insert(t);
        got_any = true;
      } else {
        skipped_any = true;
        out.warnings.push_back("skipped malformed item: " +
                               (why.empty() ? "unparseable" : why));
      }
      pos = obj_end;
    }
    out.status = got_any ? ParseStatus::partial : ParseStatus::no_json;
    (void)skipped_any;
    return out;
  }

  bool skipped = false;
  for (const auto& item : arr) {
    TripleItem t;
    std::string why;
    if (detail::triple_from_json(item, t, why)) {
      out.triples.insert(t);
    } else {
      skipped = true;
      out.warnings.push_back("skipped item: " + why);
    }
  }
  out.status = skipped ? ParseStatus::partial : ParseStatus::ok;
  return out;
}

// ---- fine-tune corpus ----

// one JSON object per line: {"id", "prompt", "completion"}; prompt is the
// truncated form, completion the triple_list text, so that
// prompt + completion == the full training render
inline void emit_finetune_corpus(const std::vector<Document>& docs,
                                 const PromptSpec& ps, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  for (const auto& d : docs) {
    RenderedPrompt r = render_prompt(d, ps, true);
    nlohmann::ordered_json line;
    line["id"] = d.id;
    line["prompt"] = r.prompt;
    line["completion"] = r.completion;
    out << line.dump() << "\n";
  }
  if (!out) throw io_error("write failed: " + path);
}

}  // namespace graphre
