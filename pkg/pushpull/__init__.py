# Package marker for the AB/Push-Pull simulation and analysis modules.
