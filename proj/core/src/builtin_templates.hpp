#pragma once

namespace codecot::detail {

struct BuiltinTemplateTexts {
  const char* version;
  const char* system;
  const char* guiding_example;
  const char* generation_cot;
  const char* generation_plain;
  const char* repair;
  const char* repair_tests;
};

const BuiltinTemplateTexts& builtin_template_texts();

}  // namespace codecot::detail
