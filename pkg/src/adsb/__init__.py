"""Automated Driving Strategical Brain (ADSB).

A scene-level safety supervisor built from three engines: experience
referencing over historical crash records, common-sense inferencing over
an editable knowledge base, and goal-and-value keeping over explicit
safety-state rules.  A strategic monitor combines them to gate tactical
state-transition requests with GO / INHIBIT / CANCEL verdicts.
"""

__version__ = "0.1.0"
