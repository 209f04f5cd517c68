#pragma once

#include <cstdlib>
#include <string>

#include <httplib.h>

#include "timesense/evalharness.hpp"

namespace timesense::evalharness {

// Optional LLM-backed feature extraction. The endpoint is a plain HTTP
// text-completion service: POST /v1/extract with a JSON body
//   {"task": "...", "text": "...", "prompt": "..."}
// replying {"text": "FEATURES: ..."}. The reply is parsed with the same
// grammar as the rule-based path; anything malformed scores as a parse
// failure. Auth token, if any, is read from TIMESENSE_LLM_TOKEN.

inline std::string extraction_prompt(TaskKind task) {
  return "Extract the structured answer features for the " + to_string(task) +
         " task from the text below. Reply with a single line of the form "
         "'FEATURES: name(key=value,...); ...' and nothing else.";
}

inline Parsed extract_with_llm(httplib::Client& client, TaskKind task,
                               const std::string& text, int retries = 2) {
  json body{{"task", to_string(task)},
            {"text", text},
            {"prompt", extraction_prompt(task)}};
  httplib::Headers headers;
  if (const char* token = std::getenv("TIMESENSE_LLM_TOKEN"))
    headers.emplace("Authorization", std::string("Bearer ") + token);
  for (int attempt = 0; attempt <= retries; ++attempt) {
    auto res = client.Post("/v1/extract", headers, body.dump(), "application/json");
    if (!res || res->status != 200) continue;
    try {
      const json reply = json::parse(res->body);
      return parse_answer(task, reply.at("text").get<std::string>());
    } catch (const std::exception&) {
      continue;
    }
  }
  return parse_failure();
}

}  // namespace timesense::evalharness
