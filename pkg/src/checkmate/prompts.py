'''Prompt templates for the three LLM conversations.

Conversation 1 analyzes the codebase and selects functions, conversation
2 plans and applies approximations, conversation 3 writes the Makefile.
Template bodies are fixed data; ``render`` fills the named ``{slot}``
placeholders and refuses to emit text with a known slot left unresolved.
Literal braces elsewhere in a template (JSON shape examples, C snippets)
are left untouched.
'''

import re

from .errors import UnknownTemplate, UnresolvedPlaceholder

TEMPLATES = {
    "conv1_system": '''You are "CheckMate," an LLM tool used for applying code approximations (approximate computing techniques). Our goal is to reduce program clock cycles to reduce energy consumption. For this, we are willing to accept some output errors.''',

    "conv1_summary": '''Here is the codebase of the application:

{complete_code_base}

Create a small summary of the app and its purpose. Then, for each function, write a brief summary of its purpose.''',

    "conv1_function_detail": '''Let's discuss {function_name} function.

What is the purpose of {function_name} function?
What are its inputs and outputs? How does it accomplish its purpose?
How would its output interact with the rest of the code?''',

    "conv1_select": '''Now, identify which functions should be approximated. For all functions in the code, please reply in this format:

# Function Name

Resoning for approximating or not approximating function.

# List of functions
{
  "function_1": "approximate",
  "function_2": "do not approximate",
  ...
  (all functions in code)
}''',

    "conv2_system": '''You are "CheckMate", an LLM tool designed to apply code approximations-techniques that intentionally introduce minor computational errors to reduce clock cycles, leveraging tolerance for inaccuracy in certain applications. The applications you are dealing with relate to batteryless IoT devices, where reducing power consumption and optimizing for low-energy environments is critical.

We will follow this flow to apply approximations:

    1. Planning/Annotation Step: After determining the function's purpose, you will assess whether it is safe to approximate. If so, you will annotate the code, adding comments where approximations can be applied, along with descriptions of what and how to apply them.

    2. Approximation Step: You will then be prompted again to apply the approximations you previously annotated.

These steps will be repeated for each function in our program's codebase. If a function contains calls to other functions, the conversation history of applied approximations for the called functions will be provided, enabling you to apply more effective approximations.

{code_base_summary}''',

    "conv2_plan": '''Now, let's move to the planning step. For the given function, {function_name}, what are the possible approximations that can be performed?

If there exists a knob variable (a variable that, when changed, increases or decreases the level of approximations), state that it is a candidate.

A point to note, this code is meant for {platform_architecture} architecture, so your suggested changes should be possible within the architecture.''',

    "conv2_apply": '''Now, for the {function_name} function, approximate the code using the approximations highlighted in the previous prompt. The goal is to modify this function to reduce the number of clock cycles it uses. Focus on the identified areas of potential improvement and apply the described approximations. Additionally, for any of the knob variables identified or created, ensure they are declared at the top of the function within the /* Knob Variables Declaration Start */ and /* Knob Variables Declaration End */ comments.

Return the following:

    The approximated code.
    A list of knob variables.
    A list of ranges for each knob variable.
    The step size by which to increment each knob variable; two options: Real or Integer.''',

    "conv2_jsonify": '''{add_error}
Reformat the code you just generated into a JSON object. The JSON should contain the following information:

    1. approximated_code: The full block of code that you generated.
    2. knob_variables: A list of all the variable names that can be tuned or adjusted in the code. These are the "knobs."
    3. knob_ranges: The possible ranges of each knob variable (in the form of minimum and maximum values or specific values, if applicable).
    4. knob_increments: The increments by which each knob variable can change. Specify whether the increment is a Real number or an Integer.

Format the output as a clean and structured JSON object as described here:

{output_instuctions}''',

    "conv3_system": '''You are an AI assistant that generates Makefiles based on a given list of source files. A Makefile is a file used by the make utility to manage the build automation of projects. The goal is to compile the source code files into an executable or library.

Instructions:

    1. You will be provided with a list of source files.
    2. Generate a Makefile that compiles these files into an executable named main.
    3. Include the necessary rules to compile object files from the source files.
    4. Create a clean rule to remove all object files and the executable.
    5. Use gcc as the compiler.''',

    "conv3_makefile": '''Given a list of files in a directory, output a Makefile to compile the application.

    files = {files_list}

    Output only the Makefile content, no other text. Your exact output will be pasted into the Makefile (so do not include "```"). The command that will be run is just "make main". Do not use the -Werror or -Wall flag.''',

    "fewshot_loop_perforation": '''Here is an examples of loop perforation. If applying loop perforation only apply in this format. No other format of loop perforation is ever acceptable. Do not add in the iteration step, only the condition step.

#### Original un-perforated function

```c
void susan_edges(in, r, mid, bp, max_no, x_size, y_size)
    uchar *in,
    *bp, *mid;
int *r, max_no, x_size, y_size;
{
  /*Knob Variables Declaration Start*/
  int loop_skip = 2;
  float precision_scale = 0.9;
  /*Knob Variables Declaration End*/

  float z;
  int do_symmetry, i, j, m, n, a, b, x, y, w;
  uchar c, *p, *cp;

  memset(r, 0, x_size * y_size * sizeof(int));

  for (i = 3; i < y_size - 3; i += loop_skip) /* @Approximation applied [No.1] [Loop Perforation] */
    for (j = 3; j < x_size - 3; j += loop_skip) /* @Approximation applied [No.1] [Loop Perforation] */
    {
      n = 100;
      p = in + (i - 3) * x_size + j - 1;
      cp = bp + in[i * x_size + j];
    }
}
```

#### Perforated function

```c
void susan_edges(in, r, mid, bp, max_no, x_size, y_size)
    uchar *in,
    *bp, *mid;
int *r, max_no, x_size, y_size;
{
  /*Knob Variables Declaration Start*/
  int loop_perforation_factor = 0.2;
  float precision_scale = 0.9;
  /*Knob Variables Declaration End*/

  float z;
  int do_symmetry, i, j, m, n, a, b, x, y, w;
  uchar c, *p, *cp;

  memset(r, 0, x_size * y_size * sizeof(int));

  int loop_truc1 = (y_size - 3) * loop_perforation_factor /* truncating the loop */
  int loop_truc2 = (y_size - 3) * loop_perforation_factor /* truncating the loop */
  for (i = 3; i < loop_truc1; i++) /* @Approximation applied [No.1] [Loop Perforation] */
    for (j = 3; j < loop_truc2; j++) /* @Approximation applied [No.1] [Loop Perforation] */
    {
      n = 100;
      p = in + (i - 3) * x_size + j - 1 - n;
      cp = bp + in[i * x_size + p];
    }

  return cp;
}
```''',

    "fewshot_precision_scaling": '''Here is an examples of precision scaling.
### Original unscaled function

```c
void calculate_image_gradient(int *gradient, float *image, int width, int height)
{
    int i, j;
    float gx, gy, magnitude;

    for (i = 1; i < height - 1; i++) /* Calculate gradients for all pixels */
        for (j = 1; j < width - 1; j++)
        {
            gx = (image[(i - 1) * width + (j + 1)] - image[(i - 1) * width + (j - 1)]) +
                 2 * (image[i * width + (j + 1)] - image[i * width + (j - 1)]) +
                 (image[(i + 1) * width + (j + 1)] - image[(i + 1) * width + (j - 1)]);
            gy = (image[(i - 1) * width + (j - 1)] + 2 * image[(i - 1) * width + j] + image[(i - 1) * width + (j + 1)]) -
                 (image[(i + 1) * width + (j - 1)] + 2 * image[(i + 1) * width + j] + image[(i + 1) * width + (j + 1)]);
            magnitude = sqrt(gx * gx + gy * gy);
            gradient[i * width + j] = (int)magnitude;
        }
}
```

---

### Scaled function with **Precision Scaling**

```c
void calculate_image_gradient(int *gradient, int *image, int width, int height)
{
    int i, j;
    int gx, gy, magnitude;

    for (i = 1; i < height - 1; i++) /* Calculate gradients for all pixels */
        for (j = 1; j < width - 1; j++)
        {
            gx = (image[(i - 1) * width + (j + 1)] - image[(i - 1) * width + (j - 1)]) +
                 2 * (image[i * width + (j + 1)] - image[i * width + (j - 1)]) +
                 (image[(i + 1) * width + (j + 1)] - image[(i + 1) * width + (j - 1)]);
            gy = (image[(i - 1) * width + (j - 1)] + 2 * image[(i - 1) * width + j] + image[(i - 1) * width + (j + 1)]) -
                 (image[(i + 1) * width + (j - 1)] + 2 * image[(i + 1) * width + j] + image[(i + 1) * width + (j + 1)]);
            magnitude = abs(gx) + abs(gy); /* Approximation by avoiding sqrt */
            gradient[i * width + j] = magnitude; /* Direct assignment as int */
        }
}
```''',
}

# default filler for the conv2_jsonify {output_instuctions} slot: the JSON
# shape the downstream parser expects, keys fixed
DEFAULT_OUTPUT_INSTRUCTIONS = '''{
    "apx_code": "<the full approximated function, as one C string>",
    "knob_variables": ["knob1"],
    "knob_ranges": [{"knob1": [20, 100]}],
    "knob_increments": [{"knob1": "Integer"}]
}

Use exactly the keys "apx_code", "knob_variables", "knob_ranges", and "knob_increments". knob_increments values must be the string "Integer" or "Real".'''

_SLOT = re.compile(r"\{([a-z_]+)\}")

# every placeholder any template declares; names outside this set are
# literal braces and never substituted
PLACEHOLDERS = frozenset(
    name
    for text in TEMPLATES.values()
    for name in _SLOT.findall(text)
    if name
    in {
        "complete_code_base",
        "function_name",
        "code_base_summary",
        "platform_architecture",
        "add_error",
        "output_instuctions",
        "files_list",
    }
)


def placeholders_of(template_id):
    """Placeholder names a template requires."""
    if template_id not in TEMPLATES:
        raise UnknownTemplate(template_id)
    return frozenset(n for n in _SLOT.findall(TEMPLATES[template_id]) if n in PLACEHOLDERS)


def render(template_id, **values):
    """Fill a template's slots; every declared slot must be supplied."""
    needed = placeholders_of(template_id)
    missing = needed - set(values)
    if missing:
        raise UnresolvedPlaceholder(template_id, sorted(missing)[0])
    text = TEMPLATES[template_id]
    for name in needed:
        text = text.replace("{%s}" % name, str(values[name]))
    leftover = [n for n in _SLOT.findall(text) if n in PLACEHOLDERS]
    if leftover:
        raise UnresolvedPlaceholder(template_id, leftover[0])
    return text
