#!/usr/bin/env python3
"""
Diagram Generator Module

Generates Mermaid flowcharts of the shallow network's topology: stem,
grouped modules (with their group size arrays and shortcut edges), pooling
and the classifier head.
"""

import logging
import os
from typing import List

from .model import NetworkSpec

logger = logging.getLogger(__name__)

# Long arrays are abbreviated in node labels
MAX_LISTED_GROUPS = 8


class DiagramGenerator:
    """Generator for network topology diagrams."""

    def __init__(self, spec: NetworkSpec):
        """Initialize with a validated network spec."""
        self.spec = spec.validate()

    def generate(self, output_path: str) -> str:
        """Write the Mermaid source next to output_path and return its path."""
        mermaid_path = f"{os.path.splitext(output_path)[0]}.mmd"
        directory = os.path.dirname(mermaid_path)
        if directory:
            os.makedirs(directory, exist_ok=True)

        with open(mermaid_path, "w") as f:
            f.write(self._create_mermaid_diagram())

        logger.info("Mermaid diagram source saved to %s", mermaid_path)
        return mermaid_path

    @staticmethod
    def _format_sizes(sizes) -> str:
        if len(sizes) <= MAX_LISTED_GROUPS:
            return "[" + ", ".join(str(s) for s in sizes) + "]"
        head = ", ".join(str(s) for s in sizes[:MAX_LISTED_GROUPS - 1])
        return f"[{head}, ... {len(sizes) - MAX_LISTED_GROUPS + 1} more]"

    def _create_mermaid_diagram(self) -> str:
        """Create the Mermaid flowchart definition."""
        spec = self.spec
        channels, height, width = spec.input_shape
        k = spec.stem_kernel
        m = spec.kernel_m

        lines: List[str] = ["graph TD;"]
        lines.append(f'    input["input {channels}x{height}x{width}"];')
        lines.append(f'    stem["{k}x{k} conv {channels}→{spec.stem_channels} + ReLU"];')
        lines.append("    input --> stem;")

        previous = "stem"
        previous_width = spec.stem_channels
        for index, scheme in enumerate(spec.module_schemes(), start=2):
            prefix = f"m{index}"
            sizes = self._format_sizes(scheme.sizes)
            lines.append(f'    subgraph "module {index} ({scheme.family.value}, n={scheme.group_count})"')
            lines.append(f'    {prefix}_expand["1x1 conv {previous_width}→{scheme.channels} + ReLU"];')
            lines.append(f'    {prefix}_row["grouped 1x{m} conv {sizes} + ReLU"];')
            lines.append(f'    {prefix}_col["grouped {m}x1 conv {sizes} + ReLU"];')
            if spec.shortcut:
                lines.append(f'    {prefix}_add(("+"));')
            lines.append("    end")

            lines.append(f"    {previous} --> {prefix}_expand;")
            lines.append(f"    {prefix}_expand --> {prefix}_row;")
            lines.append(f"    {prefix}_row --> {prefix}_col;")
            if spec.shortcut:
                lines.append(f"    {prefix}_col --> {prefix}_add;")
                lines.append(f"    {prefix}_expand -. identity .-> {prefix}_add;")
                tail = f"{prefix}_add"
            else:
                tail = f"{prefix}_col"

            lines.append(f'    {prefix}_pool["2x2 max pool"];')
            lines.append(f"    {tail} --> {prefix}_pool;")
            previous = f"{prefix}_pool"
            previous_width = scheme.channels

        lines.append(f'    head["1x1 conv {previous_width}→{spec.num_classes}"];')
        lines.append('    gap["global average pooling"];')
        lines.append('    out["softmax"];')
        lines.append(f"    {previous} --> head;")
        lines.append("    head --> gap;")
        lines.append("    gap --> out;")
        return "\n".join(lines) + "\n"
